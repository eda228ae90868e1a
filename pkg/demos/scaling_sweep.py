"""How the decay rate scales with nu.

Critical-layer data decay at ~nu^(1/2), data in the monotone region at
~nu^(1/3) over early times, and without shear at ~nu.
"""

from shearmix import scaling_exponent

nus = [1e-3, 1e-4, 1e-5, 1e-6]
cases = [("critical_bump", "sine", 0.5), ("monotone_bump", "sine", 1 / 3), ("random", "zero", 1.0)]
for kind, profile, expected in cases:
    res = scaling_exponent(nus, kind, profile, workers=4)
    rates = ", ".join(f"{r:.2e}" for r in res.rates)
    print(f"{kind:>14} on {profile:<5} slope {res.slope:.4f} (expected {expected:.3f})  rates: {rates}")
