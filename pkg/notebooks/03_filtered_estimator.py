"""
Threshold filtering and the drift quasi-MLE
===========================================

Intervals whose increment exceeds 4 sigma sqrt(delta) are treated as jumps
and dropped from the Gaussian quasi-likelihood. Without the filter the jumps
inflate the variance of the estimator well beyond the efficiency bound.
"""

from lanlab import ParameterContext, estimator_normality_experiment, gaussian_levy, make_builtin_model

model = make_builtin_model("ou", 1.0, gaussian_levy(1.0, 0.0, 1.0))
ctx = ParameterContext.power_rule(1.0, 0.0, 10_000, 0.6)

rep = estimator_normality_experiment(model, 1.0, ctx, 500, seed=3, threads=4)
print(f"threshold {rep.threshold:.3f}, efficiency bound 1/Gamma = {rep.target_var:.3f}")
for v in (rep.filtered, rep.unfiltered):
    print(f"{v.label:>10}: mean {v.mean:+.3f}  var {v.var:.3f}  KS {v.ks:.3f}  failures {v.failures}")
print(f"paired one-sided p-value {rep.paired_p_value:.1e}")

# the horizon n delta is only about 40 here, so the filtered variance sits
# slightly above the bound; it shrinks toward 1 as n grows
