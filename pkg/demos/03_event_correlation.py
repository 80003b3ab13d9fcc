# Heaviest-link trends against an annual event count.
# Run: python3 demos/03_event_correlation.py

import numpy as np

from anomnet.analysis import best_lagged_pearson, heaviest_links_per_year, pearson
from anomnet.grid import GridSpec
from anomnet.ingest import DailyField, compute_anomaly
from anomnet.netbuild import build_link_weights
from anomnet.synth import PlantSpec, generate_annual_events, generate_field

grid = GridSpec(8, 8, 20.0, 45.0, 70.0, 0.0)
years = range(1990, 2000)

# coupling strength grows over the decade, so later years hold heavier links
fields = []
for i, y in enumerate(years):
    c = 0.3 + 0.07 * i
    plants = [PlantSpec(s, s + 32, 1, c, 1.0) for s in range(0, 32, 4)]
    fields.append(generate_field(grid, (y, y), plants, seed=100 + i))

field = compute_anomaly(DailyField(grid, years.start, np.concatenate([f.values for f in fields])))
sets = [build_link_weights(field, y) for y in field.years]
heavy = heaviest_links_per_year(sets, "positive", [50, 20])
for k, s in heavy.items():
    print(f"top {k}:", s.to_dict())

events = generate_annual_events(years, start=5, trend=0.8, noise_sigma=1.0, seed=3)
print("events:", events.to_dict())
print("r =", round(pearson(events, heavy[50]), 3))
r, lag = best_lagged_pearson(events, heavy[50], 2)
print("best |r| =", round(r, 3), "at lag", lag)
