# External libraries
import numpy as np

debug = False               # Log at DEBUG level?

# ========== NETWORK ==========
host = 'localhost'          # Default bridge host for clients
port = 5025                 # Raw-SCPI TCP port
port_env = 'LABBENCH_PORT'  # Environment variable overriding the config port
timeout = 5.0               # Client I/O timeout [s]
encoding = 'utf-8'          # Wire encoding
logging_level = 'INFO'      # DEBUG, INFO, WARNING, ERROR, CRITICAL

# ========== INSTRUMENTS ==========
idn_manufacturer = 'LABBENCH'   # First field of *IDN?
idn_firmware = '0.1'            # Last field of *IDN?
error_queue_size = 16           # SCPI error queue depth
n_channels = 3                  # PSU output channels
instruments = [{'model':'EDU36311A',
                    'serial':'PSU-001',
                    'kind':'PSU',
                    'volt_max':[6.0,25.0,25.0],     # [V]
                    'curr_max':[5.0,1.0,1.0]},      # [A]
               {'model':'EDU34450A',
                    'serial':'DMM-001',
                    'kind':'DMM'}]

# ========== BENCH WIRING ==========
vin_channel = 1             # PSU channel driving V_in
vdd_channel = 2             # PSU channel driving V_DD
vbias_channel = 3           # PSU channel driving V_bias
noise_seed = 0              # Seed of the DMM noise generator

# ========== CIRCUIT PARAMETERS ==========
# <<<<<< N-channel driver >>>>>
nmos_vt = 2.0               # Threshold voltage [V]
nmos_k = 0.02               # Transconductance coefficient [A V-2]
nmos_lambda = 0.01          # Channel-length modulation [V-1]
# <<<<<< P-channel current source load >>>>>
pmos_vt = 1.0               # Threshold voltage magnitude [V]
pmos_k = 0.02               # Transconductance coefficient [A V-2]
pmos_lambda = 0.01          # Channel-length modulation [V-1]
# <<<<<< Output node >>>>>
g_leak = 1e-7               # Output node to ground conductance, ~10 MOhm meter input [S]
noise_sigma = 8.58e-7       # DMM reading standard deviation [V]
# <<<<<< Solver >>>>>
solver_ftol = 1e-12         # Node current residual tolerance [A]
solver_maxiter = 200        # Bisection iteration cap

# ========== SAMPLING ==========
vin_lo = 0.0                # Swept input range [V]
vin_hi = 5.0
points = 100                # Samples per transfer curve
reference_points = 10000    # Samples per reference curve
coarse_fraction = 0.2       # Share of the budget spent on the coarse pass
epsilon = 0.01              # Weight floor as a fraction of the mean gradient
allocation = 'multinomial'  # 'multinomial' or 'largest_remainder'
stratified = True           # One fine sample per stratum inside an interval
seed = 42                   # Sampler seed

# ========== EXPERIMENT ==========
vbias_lo = 0.0              # V_bias family range [V]
vbias_hi = 5.0
vbias_count = 10            # Curves in the family
vdd = 3.0                   # Supply voltage [V]
current_limit = 0.1         # Current limit on every channel [A]
vbias_family = np.linspace(vbias_lo,vbias_hi,vbias_count)
study_seeds = list(range(1,21))     # Seeds compared by the study
noise_reads = 100000        # Reads for the noise characterisation
transition_threshold = 0.5  # Share of the max gradient defining the transition

# ========== FILES ==========
csv_header = ['vbias','vin','vout']
