"""
Simulating a jump diffusion and checking its transition density
================================================================

An additive process with Gaussian jumps has a transition density that is a
Poisson mixture of Gaussians. We simulate many one-step transitions and
compare the histogram with the mixture.
"""

import numpy as np
from scipy.integrate import trapezoid

from lanlab import MixtureDensitySpec, gaussian_levy, make_builtin_model, mixture_density, stream
from lanlab.simulate import simulate_endpoints

# drift theta = 0, sigma = 1, jumps at rate 0.5 with N(0, 1) sizes
model = make_builtin_model("additive", 1.0, gaussian_levy(0.5, 0.0, 1.0))

# one million transitions of length 1 from x = 0
x = simulate_endpoints(model, 0.0, np.zeros(1_000_000), 1.0, stream(0))
print(f"sample mean {x.mean():+.4f}, sample variance {x.var():.4f} (exact 1.5)")

# the mixture density at a few points, with its truncation error
spec = MixtureDensitySpec(model)
y = np.array([-2.0, 0.0, 2.0])
res = mixture_density(spec, 0.0, 1.0, 0.0, y)
print("density", np.round(res.value, 6), "terms used", res.i_max + 1, f"tail bound {res.truncation_error:.1e}")

# histogram mass in [-0.1, 0.1] against the density
width = 0.2
empirical = np.mean(np.abs(x) < width / 2) / width
print(f"histogram {empirical:.4f} vs density {res.value[1]:.4f}")

# the density integrates to one
grid = np.linspace(-12, 12, 4801)
p = mixture_density(spec, 0.0, 1.0, 0.0, grid).value
print(f"integral {trapezoid(p, grid):.8f}")
