"""Static asymptotic cost exponents for Haag-Ruelle wavepacket preparation.

These numbers are reference data only; nothing here is computed.  Weak
coupling exponents are for the gate count as a power of 1/eps.  Strong
coupling rows give the power of 1/(lambda_c - lambda0), of the momentum
``p``, or of 1/delta_p.  ``None`` marks an entry without a stated value.
"""

WEAK_COUPLING = [
    # quantity, d=1, d=2, d=3, description
    ("G_wp", 1.5, 2.0, 5.5, "wavepacket creation stage"),
    ("G_vac", 1.0, 1.5, 3.0, "adiabatic vacuum preparation stage"),
    ("G", 1.5, 4.0, 6.5, "total, with repetitions 1/rho"),
    ("G_prime", 1.25, 3.0, 4.75, "total, with amplitude amplification"),
    ("G_JLP", 1.5, 2.376, 5.5, "wavepacket-adiabatic reference protocol"),
]

STRONG_COUPLING = [
    # quantity, variable, d=1, d=2, description
    ("G_strong", "1/(lambda_c - lambda0)", 6.0, 5.67, "total near the critical point"),
    ("G_prime_strong", "1/(lambda_c - lambda0)", 5.0, 4.41, "with amplitude amplification"),
    ("G_strong_JLP", "1/(lambda_c - lambda0)", 9.0, 6.3, "reference protocol"),
    ("G_strong", "p", 8.0, 14.0, "growth with particle momentum"),
    ("G_prime_strong", "p", 5.0, 9.0, "growth with particle momentum, amplified"),
    ("G_strong_JLP", "p", 4.0, 6.0, "reference protocol vs momentum"),
    ("G_strong", "1/delta_p", "6d", None, "growth with inverse momentum width"),
    ("G_prime_strong", "1/delta_p", "4d", None, "inverse momentum width, amplified"),
]

TIME_SCALES = {
    "tau_vac": {"d=1,2": "sqrt(V/eps)", "d=3": "sqrt(V/(a^4 eps))"},
    "tau_wp": {"d=1,2": "V/eps", "d=3": "V/(a^6 eps)"},
    "tau_vac_strong": {"scaling": "1/m^3", "exponent_d1": 3.0, "exponent_d2": 1.89},
    "G_prep": "(1/eps)^(1.188 d)",
    "free_vacuum_cost": "V^2.376",
    "repetitions": {"plain": "1/rho", "amplified": "1/sqrt(rho)"},
    "mass_gap_near_critical": {"d=1": "(lambda_c - lambda0)^1", "d=2": "(lambda_c - lambda0)^0.63"},
    "volume_near_critical": {"d=1": "(lambda_c - lambda0)^-1", "d=2": "(lambda_c - lambda0)^-1.26"},
}


def reference_scalings() -> dict:
    return {
        "weak_coupling": [
            {"quantity": q, "d1": a, "d2": b, "d3": c, "description": s}
            for q, a, b, c, s in WEAK_COUPLING
        ],
        "strong_coupling": [
            {"quantity": q, "variable": v, "d1": a, "d2": b, "description": s}
            for q, v, a, b, s in STRONG_COUPLING
        ],
        "time_scales": TIME_SCALES,
    }


def weak_row(d: int) -> tuple:
    """(G, G_prime, G_JLP) exponents for dimension ``d``."""
    rows = {q: (a, b, c) for q, a, b, c, _ in WEAK_COUPLING}
    return tuple(rows[q][d - 1] for q in ("G", "G_prime", "G_JLP"))


def format_table() -> str:
    lines = ["Weak coupling: gate count ~ (1/eps)^exponent",
             f"{'quantity':<12}{'d=1':>8}{'d=2':>8}{'d=3':>8}  description"]
    for q, a, b, c, s in WEAK_COUPLING:
        lines.append(f"{q:<12}{a:>8}{b:>8}{c:>8}  {s}")
    lines += ["", "Strong coupling: gate count ~ variable^exponent",
              f"{'quantity':<16}{'variable':<24}{'d=1':>6}{'d=2':>6}  description"]
    for q, v, a, b, s in STRONG_COUPLING:
        lines.append(f"{q:<16}{v:<24}{str(a):>6}{str(b if b is not None else '-'):>6}  {s}")
    lines += ["", "Time scales and other costs"]
    for k, v in TIME_SCALES.items():
        lines.append(f"{k}: {v}")
    return "\n".join(lines)
