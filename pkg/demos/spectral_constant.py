"""The constant in the weighted spectral inequality.

For frozen weights at t = nu^(-1/2), finds the smallest c with

    nu^(1/3) |f B^(1/3) phi W|^2 <= nu |f_y W|^2 + c nu^(1/3) |U' B^(-2/3) f phi W|^2

for every grid function f.  It should not blow up as nu -> 0.
"""

from shearmix import estimate_spectral_constant, profile_from_name

sine = profile_from_name("sine")
for nu in (1e-2, 1e-3, 1e-4, 1e-5):
    est = estimate_spectral_constant(sine, nu, nu ** -0.5)
    print(f"nu={nu:7.0e}  n={est.n:5d}  c_min={est.c_min:.4f}  eigen checks={est.method['eig_checks']}")
