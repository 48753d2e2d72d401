import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from canopyfuel.bev import BevRaster, GridSpec
from canopyfuel.errors import EmptyInventory, InputError, OutOfRange
from canopyfuel.inventory import (
    CSV_HEADER,
    Crown,
    Species,
    alpha_geo,
    classify_species,
    effective_lai,
    fuel_load,
    inventory_csv,
    measure_crowns,
    summary_json,
    write_reports,
)
from canopyfuel.io.config import PipelineConfig
from canopyfuel.segmentation import LabelRaster


def _crown(tid, area, species, sigma=0.0):
    return Crown(tid, 0.0, 0.0, area, area, 10.0, sigma, species)


@pytest.mark.parametrize("lat, alpha", [
    (55.0, 0.85), (50.0, 0.85), (90.0, 0.85), (49.999, 1.0), (40.0, 1.0),
    (23.5, 1.0), (23.49, 1.15), (10.0, 1.15), (0.0, 1.15), (None, 1.0),
])
def test_alpha_geo_bands(lat, alpha):
    assert alpha_geo(lat) == alpha


@given(st.floats(-90, 90))
def test_alpha_geo_symmetric(lat):
    assert alpha_geo(lat) == alpha_geo(-lat)


@pytest.mark.parametrize("lat", [91.0, -90.5, float("nan")])
def test_alpha_geo_out_of_range(lat):
    with pytest.raises(OutOfRange):
        alpha_geo(lat)


def test_species_threshold_strict():
    assert classify_species(0.25) is Species.CONIFER
    assert classify_species(0.2) is Species.BROADLEAF
    assert classify_species(0.05) is Species.BROADLEAF


def test_effective_lai_values():
    assert effective_lai(Species.CONIFER, 0.85) == 2.55
    assert effective_lai(Species.BROADLEAF, 1.0) == 5.5
    assert effective_lai(Species.BROADLEAF, 1.15) == pytest.approx(6.325, abs=1e-12)


def test_fuel_reference_stands():
    _, broad = fuel_load([_crown(1, 40965.3, Species.BROADLEAF)])
    assert broad.total_fuel_tons == pytest.approx(40965.3 * 5.5 * 3.8 / 1000, rel=1e-12)
    assert abs(broad.total_fuel_tons - 856.17) / 856.17 < 0.005
    cfg = PipelineConfig(latitude_deg=55.0)
    recs, con = fuel_load([_crown(1, 10305.6, Species.CONIFER)], config=cfg)
    assert recs[0].lai_effective == 2.55
    assert abs(con.total_fuel_tons - 65.7) / 65.7 < 0.005


def test_zero_area_tree_has_no_fuel():
    recs, summary = fuel_load([_crown(1, 0.0, Species.CONIFER), _crown(2, 4.0, Species.BROADLEAF)])
    assert recs[0].fuel_kg == 0.0
    assert summary.total_fuel_tons == pytest.approx(4.0 * 5.5 * 3.8 / 1000)


def test_record_invariants_and_order():
    crowns = [_crown(3, 2.0, Species.CONIFER), _crown(1, 5.0, Species.BROADLEAF)]
    cfg = PipelineConfig(latitude_deg=-12.0)
    recs, summary = fuel_load(crowns, 7.0, cfg)
    assert [r.tree_id for r in recs] == [1, 3]
    rho = {Species.CONIFER: 2.5, Species.BROADLEAF: 3.8}
    lai = {Species.CONIFER: 3.0, Species.BROADLEAF: 5.5}
    for r in recs:
        assert r.lai_effective == lai[r.species] * 1.15
        assert r.fuel_kg == r.corrected_area_m2 * r.lai_effective * rho[r.species]
    assert summary.total_fuel_tons == pytest.approx(sum(r.fuel_kg for r in recs) / 1000, rel=1e-9)
    assert summary.n_trees == 2 and summary.alpha_geo == 1.15


def test_mass_conservation_enforced():
    with pytest.raises(InputError):
        fuel_load([_crown(1, 5.0, Species.CONIFER)], footprint_m2=6.0)


def test_empty_inventory():
    with pytest.raises(EmptyInventory):
        fuel_load([])


def test_measure_crowns_and_species_shift_invariance():
    spec = GridSpec(6, 2, 1.0, 10.0, 20.0)
    lab = LabelRaster(spec, [[1, 1, 0, 2, 2, 2], [1, 1, 0, 2, 2, 2]])
    norm = np.array([[0.2, 0.9, 0.0, 0.5, 0.5, 0.6], [0.3, 1.0, 0.0, 0.5, 0.55, 0.5]])
    height = BevRaster(spec, norm * 20.0 + 100.0)
    crowns = measure_crowns(lab, BevRaster(spec, norm), height, 100.0, 10.0)
    a, b = crowns
    assert (a.tree_id, a.raw_area_m2, b.raw_area_m2) == (1, 4.0, 6.0)
    assert (a.centroid_x_m, a.centroid_y_m) == (10.5, 20.5)
    assert a.max_height_m == pytest.approx(20.0)
    assert a.sigma_h_tree == pytest.approx(np.std([0.2, 0.9, 0.3, 1.0]))
    assert a.species is Species.CONIFER and b.species is Species.BROADLEAF
    # species depend on normalized heights only, so shifting raw heights changes nothing
    shifted = measure_crowns(lab, BevRaster(spec, norm), BevRaster(spec, height.values + 7), 107.0, 10.0)
    assert [c.species for c in shifted] == [c.species for c in crowns]


def test_reports_format_and_determinism(tmp_path):
    recs, summary = fuel_load(
        [_crown(1, 3.0, Species.CONIFER, 0.3), _crown(2, 1.0, Species.BROADLEAF, 0.1)],
        config=PipelineConfig(latitude_deg=55.0),
    )
    csv_path, json_path = write_reports(recs, summary, tmp_path / "a")
    write_reports(recs, summary, tmp_path / "b")
    assert csv_path.read_bytes() == (tmp_path / "b" / "inventory.csv").read_bytes()
    assert json_path.read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()
    lines = csv_path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1] == ("1,0.000000,0.000000,3.000000,3.000000,10.000000,0.300000,"
                        "conifer,2.550000,19.125000")
    doc = json.loads(json_path.read_text())
    assert set(doc) == {"n_trees", "footprint_m2", "corrected_area_m2", "latitude_deg",
                        "alpha_geo", "lai_by_species", "total_fuel_tons"}
    assert doc["lai_by_species"] == {"broadleaf": 4.675, "conifer": 2.55}
    assert '"alpha_geo": 0.850000' in json_path.read_text()


def test_reports_reject_empty(tmp_path):
    _, summary = fuel_load([_crown(1, 1.0, Species.CONIFER)])
    with pytest.raises(EmptyInventory):
        write_reports([], summary, tmp_path)


def test_summary_json_null_latitude():
    _, summary = fuel_load([_crown(1, 1.0, Species.CONIFER)])
    assert json.loads(summary_json(summary))["latitude_deg"] is None
    assert inventory_csv([]).strip() == CSV_HEADER
