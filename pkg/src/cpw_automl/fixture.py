"""Dimensions and reference values of the printed CPW test fixture."""
from .physics import CpwGeometry, MaterialParams

LINE_LENGTHS_M = (14.97e-3, 18.42e-3, 23.57e-3, 35.78e-3, 61.60e-3, 97.93e-3)

PRINTED_CPW = CpwGeometry(
    w_center=1.983e-3,
    gap=0.13e-3,
    w_ground=1.983e-3,
    t_substrate=125e-6,
    t_spacer=5e-3,
    t_metal=2e-6,
    line_lengths=LINE_LENGTHS_M,
)

# split-post resonator / waveguide / literature / dc-resistance values
MEASURED = MaterialParams(sigma_ink=2.973e7, eps_fs=3.2, eps_ds=1.81, tan_delta=0.01)

# mean of the frequency-dependent ML predictions reported for the same lines
PREDICTED = MaterialParams(sigma_ink=3.107e7, eps_fs=3.05, eps_ds=1.85, tan_delta=0.0113)

VERIFY_THRESHOLD_NP_M = 0.2
