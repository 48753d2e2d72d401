"""
From crowns to fuel load
========================

Each crown's area is rescaled so the stand total matches the canopy
footprint, then converted to fuel through a species LAI, a latitude factor
and a per-species density.
"""

from canopyfuel.inventory import Crown, Species, alpha_geo, fuel_load, inventory_csv, summary_json
from canopyfuel.io.config import PipelineConfig

for lat in (10.0, 40.0, 55.0, -62.0):
    print("latitude %6.1f -> alpha_geo %.2f" % (lat, alpha_geo(lat)))

# two single-crown stands sized like published regional surveys
broadleaf = [Crown(1, 0.0, 0.0, 40965.3, 40965.3, 25.0, 0.08, Species.BROADLEAF)]
conifer = [Crown(1, 0.0, 0.0, 10305.6, 10305.6, 30.0, 0.31, Species.CONIFER)]

_, temperate = fuel_load(broadleaf, config=PipelineConfig(latitude_deg=40.0))
records, boreal = fuel_load(conifer, config=PipelineConfig(latitude_deg=55.0))
print("temperate broadleaf stand: %.2f t" % temperate.total_fuel_tons)
print("boreal conifer stand: %.2f t (effective LAI %.2f)"
      % (boreal.total_fuel_tons, records[0].lai_effective))

print(inventory_csv(records))
print(summary_json(boreal))
