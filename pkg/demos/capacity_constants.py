"""Reproduce the capacity constants entering the limit functionals.

Writes capacity_constants.csv next to this script and prints each constant
with its analytic reference where one exists.
"""

import csv
import math
import pathlib

from pinhomog.capacity import (boundary_segment_capacity, critical_case_density,
                               disk_capacity, half_space_factor)

out = pathlib.Path(__file__).with_name("capacity_constants.csv")
rows = []

seg = boundary_segment_capacity(p=1.5)
rows.append(("boundary_segment p=3/2", seg.value, 1.602))

ball = disk_capacity(4.0 / 3.0, 0.5)
rows.append(("disk diameter 1 p=4/3", ball.value, math.pi * 4 ** (1 / 3)))

disk = disk_capacity(1.5, 1.0)
rows.append(("disk radius 1 p=3/2", disk.value, 2 * math.pi))

for p in (4.0 / 3.0, 1.5):
    rows.append((f"half-space factor p={p:.3g}", half_space_factor(p), 0.5))

crit = critical_case_density(1.9)
rows.append(("critical kappa=1.9", crit.value, 2 * math.pi / 1.9))

with out.open("w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["quantity", "computed", "reference"])
    w.writerows(rows)

for name, got, ref in rows:
    print(f"{name:28s} {got:10.6f}  (reference {ref:10.6f}, "
          f"rel {abs(got - ref) / ref:.2%})")
print(f"wrote {out}")
