"""Walk through the measurement operators: ray transform, adjoint, FBP.

Builds the classic head phantom, projects it into a sinogram, verifies the
dot-product adjoint identity numerically, reconstructs with filtered
backprojection, and reports the round-trip PSNR.  Saves PNG previews (and a
matplotlib panel when matplotlib is installed) under demos/out/.
"""
import pathlib

import numpy as np

from noisier2inverse.dataio import save_png
from noisier2inverse.geometry import (ImageGrid, ScanGeometry, Sinogram,
                                      default_num_detectors)
from noisier2inverse.metrics import psnr
from noisier2inverse.phantoms import shepp_logan
from noisier2inverse.tomo import fbp, radon_adjoint, radon_forward

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

width = 128
geom = ScanGeometry(num_angles=256,
                    num_detectors=default_num_detectors(width))
phantom = shepp_logan(width)

print(f"image {width}x{width}, {geom.num_angles} angles x "
      f"{geom.num_detectors} detectors")

sino = radon_forward(phantom, geom)
print(f"sinogram range [{sino.values.min():.2f}, {sino.values.max():.2f}] "
      "(line integrals in pixel units)")

# The adjoint identity <Ax, u> = <x, A^T u> for random u: the projector and
# its transpose are the same stored sparse matrix, so this is exact up to
# float rounding.
rng = np.random.default_rng(0)
x = rng.standard_normal(phantom.values.shape)
u = rng.standard_normal(sino.values.shape)
lhs = float(np.sum(radon_forward(ImageGrid(x, 1.0), geom).values * u))
rhs = float(np.sum(x * radon_adjoint(Sinogram(geom, u), width).values))
print(f"adjoint identity: <Ax,u>={lhs:.6e}  <x,A'u>={rhs:.6e}  "
      f"rel diff {abs(lhs - rhs) / abs(lhs):.2e}")

recon = fbp(sino, width)
print(f"FBP round trip: {psnr(recon.values, phantom.values):.2f} dB")

save_png(OUT / "operators_phantom.png", phantom.values)
save_png(OUT / "operators_fbp.png", recon.values)
save_png(OUT / "operators_sinogram.png",
         (sino.values - sino.values.min()) / np.ptp(sino.values))
print(f"previews written to {OUT}/operators_*.png")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    for ax, (img, title) in zip(axes, [
            (phantom.values, "phantom"),
            (sino.values, "sinogram"),
            (recon.values, "FBP reconstruction")]):
        ax.imshow(img, cmap="gray")
        ax.set_title(title)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(OUT / "operators_panel.png", dpi=120)
    print(f"figure written to {OUT}/operators_panel.png")
except ImportError:
    print("matplotlib not installed; skipping the figure")
