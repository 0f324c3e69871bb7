"""Laboratory bench bridge (labbench)

Virtual power supply and multimeter behind a SCPI line server, with a
sweep harness comparing uniform and gradient-weighted adaptive sampling.

License: MIT
"""

__version__ = '0.1.0'
