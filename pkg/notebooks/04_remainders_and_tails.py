"""
Remainder scaling and jump tail probabilities
=============================================

The expansion of the log-likelihood ratio leaves remainder terms whose
second moments shrink like a power of delta. We estimate those powers from
log-log slopes, then check the Poisson tail P(N >= 2) <= (lambda delta)^2.
"""

from lanlab import ExperimentConfig, run_scaling_study, run_tail_checks

config = ExperimentConfig.from_dict(
    {
        "model": {"kind": "ou", "theta0": 1.0, "sigma": 1.0, "intensity": 1.0,
                  "jump_law": {"gaussian": {"mean": 0.0, "sd": 1.0}}},
        "experiment": {"scaling_intervals": 20_000, "tail_draws": 1_000_000},
    }
)

scaling = run_scaling_study(config, threads=4)
for s in scaling.slopes:
    if s["slope"] is None:
        print(f"{s['quantity']:>10}: {s['flag']}")
    else:
        print(f"{s['quantity']:>10}: slope {s['slope']:.2f}  95% CI [{s['ci'][0]:.2f}, {s['ci'][1]:.2f}]")

tails = run_tail_checks(config, threads=4)
for t in tails.tails:
    print(f"{t['check']:>18} delta={t['delta']:<6} p_hat {t['p_hat']:.2e}  bound {t['bound']:.2e}  pass {t['pass']}")
