"""
Reverse-mode gradients in float64
=================================

The attacks in this package are all gradient based, so everything rests on a
small reverse-mode engine. This walk-through builds a graph by hand, pulls
gradients out of it and checks them against central differences.
"""
import numpy as np

from foolforge.autodiff import SpectralParam, Tensor, grad, grad_check, ops, spectral_synthesize

rng = np.random.default_rng(0)

###############################################################################
# A tiny graph
# ------------
# Tensors flagged with ``requires_grad`` are leaves; every op records how to
# push a cotangent back to its inputs.

w = Tensor(rng.standard_normal((4, 3)), requires_grad=True, name="w")
x = Tensor(rng.standard_normal((5, 4)))
loss = ops.sum(ops.tanh(ops.matmul(x, w)) ** 2)
(dw,) = grad(loss, [w])
print("loss", round(loss.item(), 6), "| dloss/dw shape", dw.shape)

###############################################################################
# Checking against finite differences
# -----------------------------------
# ``grad_check`` returns the worst relative error between the analytic and the
# numerical gradient for random probes.

err = grad_check(lambda a: ops.sum(ops.sigmoid(a) * a), [rng.standard_normal((3, 3))], rng)
print("sigmoid relative error", f"{err:.2e}")

###############################################################################
# Images from Fourier coefficients
# --------------------------------
# The decorrelated parameterization stores half-plane DFT coefficients and
# damps high frequencies before the inverse transform, then a sigmoid maps the
# result into [0, 1]. All-zero coefficients render a flat mid-grey image.

flat = spectral_synthesize(SpectralParam.zeros((3, 16, 16)), (3, 16, 16))
print("flat image range", float(flat.data.min()), float(flat.data.max()))

coeffs = Tensor(SpectralParam.random((3, 16, 16), rng, std=0.5).coeffs, requires_grad=True)
img = spectral_synthesize(coeffs, (3, 16, 16))
(g,) = grad(ops.mean(img), [coeffs])
print("gradient reaches", int((np.abs(g) > 0).sum()), "of", g.size, "coefficients")
