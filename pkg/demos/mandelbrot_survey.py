"""Hyperbolicity survey of z^2 + c, with an optional picture.

Run: python demos/mandelbrot_survey.py [out.ppm]
"""
import sys

from nestlab.mandel import Kind, box_survey, raster, raster_ppm, survey_csv

boxes = {
    "whole set": (-2.0, 0.5, -1.25, 1.25),
    "period-2 disk": (-1.2, -0.8, -0.2, 0.2),
    "near the boundary": (-0.76, -0.74, 0.09, 0.11),
}
for name, box in boxes.items():
    for budget in (10**3, 10**4):
        s = box_survey(box, 400, seed=1, budget=budget)
        dens = "  ".join(f"{k.value} {s.density(k):.3f}" for k in Kind)
        print(f"{name:>18}  budget {budget:>6}: {dens}")

# densities in boxes shrinking onto a chosen parameter near the boundary
c0 = complex(-0.75, 0.1)
shrinking = [box_survey((c0.real - r, c0.real + r, c0.imag - r, c0.imag + r), 400, seed=2,
                        budget=10**4) for r in (1e-1, 1e-2, 1e-3)]
print("\nboxes around", c0)
print(survey_csv(shrinking), end="")

if len(sys.argv) > 1:
    grid = raster((-2.0, 0.5, -1.25, 1.25), 400, 400, budget=2000)
    with open(sys.argv[1], "wb") as fh:
        fh.write(raster_ppm(grid))
    print("wrote", sys.argv[1])
