"""Analytic variances and comparative efficiencies of the estimator families.

Run: python3 demos/efficiency_table.py   (about a minute, all by quadrature)
"""
from bridgevar import bridge_laws as laws
from bridgevar import efficiency_lab as el
from bridgevar import estimators as est


def main():
    var = {"real": 2.0, "simple": 2.0, "gk": 0.2693,
           "high": 4.0 * (laws.high_moment(4) - laws.high_moment(2) ** 2),
           "t-high": 1.0 / laws.efficiency_constant("t-high").E - 1.0}
    for fam in ("bpark", "me", "t-me", "me-x", "t-me-x"):
        var[fam] = laws.efficiency_constant(fam).variance
    print(f"{'family':8s} {'kappa':>5s} {'Var':>8s} {'R':>7s}")
    for fam, v in sorted(var.items(), key=lambda kv: -kv[1]):
        k = est.EstimatorId(fam).kappa
        print(f"{fam:8s} {k:5d} {v:8.4f} {el.comparative_efficiency(v, k):7.3f}")
    print("(gk has no closed form; its variance is the Monte Carlo value)")


if __name__ == "__main__":
    main()
