import numpy as np

TOOLKIT_VERSION = "0.1.0"

#######################################################################################
class ModuleConst:
    """
    Physical constants and default parameters of the gate toolkit.

    Frequencies are stored in Hz (ordinary frequency); hz2rad/rad2hz convert to the
    angular units (rad/s) used internally by every module.
    """

    pi = np.pi
    two_pi = 2.0*np.pi

    # Gate drive
    omega_ms_hz = 1180.0                        # peak gate Rabi frequency Omega_MS/2pi, Hz
    sinn_n = 2                                  # default exponent of sin^n
    sinn_m = 1                                  # default number of lobes

    # Ion and trap
    qubit_freq_hz = 1082.55e6                   # omega_0/2pi, Hz
    mode_freq_hz = 6.16e6                       # omega_r/2pi, Hz
    nbar = 0.4                                  # initial mean occupation
    heating_rate = 8.4                          # quanta/s
    fock_cutoff = 40

    # Detection and statistics
    detection_window = 400e-6                   # s
    lambda_dark = 2.0                           # counts/window, synthetic default
    lambda_bright = 30.0                        # counts/window, synthetic default
    reference_shots = 20000
    shots_per_phase = 300
    scans = 2
    resamples = 1000
    epsilon_spam = 0.015

    # Noise sweeps
    fwhm_grid_max_hz = 1000.0
    fwhm_grid_points = 11
    ou_corr_time_factor = 10.0                  # corr_time = factor * tau
    fwhm_to_sigma = 1.0/(2.0*np.sqrt(2.0*np.log(2.0)))

    # Numerical tolerances
    quad_tol_fg = 1e-10
    quad_tol_a = 1e-9
    closure_tol = 1e-8
    thermal_tail = 1e-8
    hermite_tol = 1e-8

    # Types of envelope
    isSquare = "square"
    isSinN = "sinn"
    isWalsh = "walsh"

    # Types of estimator
    usePoissonian = "poissonian"
    useThreshold = "threshold"
    useParityCombined = "parity_combined"
    useJointML = "joint_ml"                     # reserved


def hz2rad(f):
    """Ordinary frequency (Hz) to angular frequency (rad/s)."""
    if np.ndim(f):
        return 2.0*np.pi*np.asarray(f, dtype=float)
    return 2.0*np.pi*float(f)


def rad2hz(w):
    """Angular frequency (rad/s) to ordinary frequency (Hz)."""
    if np.ndim(w):
        return np.asarray(w, dtype=float)/(2.0*np.pi)
    return float(w)/(2.0*np.pi)
