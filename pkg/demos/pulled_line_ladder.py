"""Perforation ladder for the pulled-line problem (vertical-line pins).

Solves the limit problem and the perforated problems for eps in
{1/2, 1/4, 1/8, 1/16}, prints the energy gaps and exclusion-region L2
errors, and writes the report plus VTK fields to demos/out_pulled_line/.
"""

import pathlib

from pinhomog.experiments import default_config, run_ladder

out = pathlib.Path(__file__).with_name("out_pulled_line")
out.mkdir(exist_ok=True)

config = default_config("bvp1")
report = run_ladder(config, out_dir=str(out), write_fields=True)

print(f"capacity constant c = {report.capacity_c}")
print(f"{'eps':>8} {'energy':>12} {'gap':>12} {'L2 error':>12}  status")
for row in report.rows:
    print(f"{row['eps']:8.4f} {row['energy']:12.6f} {row['gap']:12.3e} "
          f"{row['l2']:12.3e}  {row['status']}")
print(f"artifacts in {out}")
