# Configuration file for the Sphinx documentation builder.
#
# For the full list of built-in configuration values, see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------

import os
import sys
sys.path.insert(0, os.path.abspath('..'))

import labbench

project = 'labbench'
copyright = '2026, labbench developers'
author = 'labbench developers'
release = labbench.__version__

# -- General configuration ---------------------------------------------------

extensions = ['sphinx_book_theme',
              'myst_parser',
              'sphinx.ext.autodoc',
              'sphinx.ext.autosummary',
              'numpydoc',
              'sphinx.ext.viewcode',
              'sphinx_togglebutton',
              ]

myst_enable_extensions = [
    "colon_fence",
    "deflist",
    "dollarmath",
]

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store', 'environment.yml']

# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_book_theme'

html_theme_options = {
    "show_nav_level":2,
    "navigation_depth":3,
    }
