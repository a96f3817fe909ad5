import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ghostlab import analytic, model, timetags
from ghostlab.model import CoincidenceProfile, ConfigError, ExperimentConfig


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    assert model.load_config(path) == model.paper_defaults()


def test_overlapping_slits_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("slit_separation_d_mm = 0.1\nslit_width_a_mm = 0.2\n")
    with pytest.raises(ConfigError, match="d > a violated"):
        model.load_config(path)


def test_halved_focal_length_halves_fringe_period(tmp_path):
    path = tmp_path / "f.cfg"
    path.write_text("focal_length_f = 0.110\n")
    cfg = model.load_config(path)
    period = analytic.fringe_period(analytic.params_from_config(cfg))
    # 780 nm * 0.110 m / 0.5 mm
    assert period == pytest.approx(171.6e-6, rel=1e-12)
    full = analytic.fringe_period(analytic.params_from_config(model.paper_defaults()))
    assert period == pytest.approx(full / 2, rel=1e-12)


def test_reference_apparatus_values():
    cfg = model.paper_defaults()
    assert cfg.lambda2 == 780e-9
    assert cfg.focal_length_f == 0.220
    assert cfg.scan_step == 50e-6
    # the remaining documented apparatus numbers
    expected = {
        "lambda1": 1529.4e-9, "slit_width_a": 0.2e-3, "slit_separation_d": 0.5e-3,
        "bucket_width": 1.0e-3, "point_width": 0.2e-3, "divergence_theta": 3.2e-3,
        "pump_waist_1": 0.6e-3, "pump_waist_2": 0.35e-3, "tau_c": 1.5e-9,
        "fiber_delay": 1000e-9, "eta_det1": 0.08, "eta_det2": 0.5,
        "eta_coupling1": 0.5, "eta_coupling2": 0.9, "pair_rate": 2e4,
        "bg_rate1": 1e3, "bg_rate2": 1e3, "gate_width": 10e-9,
        "z_source_slit": 0.25, "z_slit_bucket": 1.0, "detuning_hz": 2.5e9,
        "cell_temperature_c": 110.0, "pump_power_1": 28e-3, "pump_power_2": 50e-6,
        "pump_angle_deg": 1.27, "emission_angle_deg": 2.26,
    }
    for name, value in expected.items():
        assert getattr(cfg, name) == value, name


def test_each_field_declared_once():
    names = [f.name for f in dataclasses.fields(ExperimentConfig)]
    assert len(names) == len(set(names))


def test_unit_suffixes():
    cfg = model.parse_config("lambda2_nm = 800\nfiber_delay_ns = 500\nscan_step_um = 25\n"
                             "divergence_theta_mrad = 2\ntau_c_ps = 900\n")
    assert cfg.lambda2 == pytest.approx(800e-9)
    assert cfg.fiber_delay == pytest.approx(500e-9)
    assert cfg.scan_step == pytest.approx(25e-6)
    assert cfg.divergence_theta == pytest.approx(2e-3)
    assert cfg.tau_c == pytest.approx(0.9e-9)


@pytest.mark.parametrize("text, message", [
    ("no_such_key = 1\n", "unknown config key"),
    ("lambda2 = 780e-9\nlambda2_nm = 780\n", "given twice"),
    ("lambda2 = blue\n", "cannot parse"),
    ("gated = maybe\n", "boolean"),
    ("grid_samples = 1000\n", "power of two"),
    ("grid_samples_um = 1024\n", "unknown config key|unit suffix"),
    ("eta_det1 = 1.5\n", "eta_det1"),
    ("tau_c = 0\n", "tau_c > 0"),
    ("pair_rate = -1\n", "pair_rate >= 0"),
    ("scan_min = 1e-3\nscan_max = 0\n", "scan_min < scan_max"),
    ("[section]\nlambda2 = 1\n", "malformed"),
])
def test_invalid_configs(text, message):
    with pytest.raises(ConfigError, match=message):
        model.parse_config(text)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        model.load_config(tmp_path / "absent.cfg")


def test_comments_and_case_sensitive_keys():
    cfg = model.parse_config("# comment\n; other\npair_rate = 5  # inline\n")
    assert cfg.pair_rate == 5.0
    with pytest.raises(ConfigError):
        model.parse_config("Pair_Rate = 5\n")


def test_optional_gate_delay():
    cfg = model.parse_config("gate_delay = none\n")
    assert cfg.gate_delay is None
    assert cfg.gate_electronic_delay == pytest.approx(cfg.fiber_delay - cfg.gate_width / 2)
    cfg = model.parse_config("gate_delay_ns = 990\n")
    assert cfg.gate_electronic_delay == pytest.approx(990e-9)


positive = st.floats(min_value=1e-9, max_value=1e3, allow_nan=False, allow_infinity=False)


@st.composite
def configs(draw):
    a = draw(st.floats(min_value=1e-6, max_value=1e-3))
    d = a * draw(st.floats(min_value=1.01, max_value=10.0))
    lo = draw(st.floats(min_value=-5e-3, max_value=0.0))
    return ExperimentConfig(
        lambda1=draw(positive), lambda2=draw(positive), focal_length_f=draw(positive),
        slit_width_a=a, slit_separation_d=d,
        corr_sigma=draw(st.one_of(st.just(math.inf), positive)),
        point_width=draw(st.floats(min_value=0.0, max_value=1e-3)),
        eta_det1=draw(st.floats(min_value=0.0, max_value=1.0)),
        pair_rate=draw(st.floats(min_value=0.0, max_value=1e7)),
        gated=draw(st.booleans()),
        gate_delay=draw(st.one_of(st.none(), st.floats(min_value=0.0, max_value=1e-6))),
        scan_min=lo, scan_max=lo + draw(st.floats(min_value=1e-6, max_value=5e-3)),
        grid_samples=2 ** draw(st.integers(min_value=6, max_value=14)),
        n_source_modes=draw(st.integers(min_value=1, max_value=50)),
    )


@given(configs())
def test_config_round_trip(cfg):
    assert model.parse_config(model.dump_config(cfg)) == cfg


@given(configs())
def test_fingerprint_tracks_content(cfg):
    same = model.parse_config(model.dump_config(cfg))
    assert model.config_fingerprint(same) == model.config_fingerprint(cfg)
    changed = cfg.replace(pair_rate=cfg.pair_rate + 1.0)
    assert model.config_fingerprint(changed) != model.config_fingerprint(cfg)


def test_save_and_load(tmp_path, defaults):
    path = tmp_path / "c.cfg"
    model.save_config(defaults.replace(gated=True), path)
    assert model.load_config(path) == defaults.replace(gated=True)


def test_config_is_immutable(defaults):
    with pytest.raises(dataclasses.FrozenInstanceError):
        defaults.lambda1 = 1.0


def test_metadata_fields_do_not_affect_computations(defaults):
    other = defaults.replace(detuning_hz=1.0, cell_temperature_c=20.0, pump_power_1=1.0,
                             pump_power_2=1.0, pump_angle_deg=0.0, emission_angle_deg=0.0)
    assert analytic.params_from_config(other) == analytic.params_from_config(defaults)
    a = timetags.generate(timetags.temporal_params_from_config(defaults, seed=4), 0.5)
    b = timetags.generate(timetags.temporal_params_from_config(other, seed=4), 0.5)
    assert a == b


def test_scan_positions(defaults):
    x = model.scan_positions(defaults)
    assert x[0] == defaults.scan_min
    assert x[-1] == pytest.approx(defaults.scan_max)
    assert np.allclose(np.diff(x), 50e-6)
    x = model.scan_positions(defaults.replace(scan_min=-800e-6, scan_max=800e-6))
    assert x.size == 33


def test_corr_sigma_from_divergence(defaults):
    expected = 1529.4e-9 / (2 * math.pi * 3.2e-3)
    assert model.corr_sigma_from_divergence(defaults) == pytest.approx(expected)
    assert model.corr_sigma_from_divergence(defaults.replace(divergence_theta=0.0)) == math.inf


class TestCoincidenceProfile:
    def test_valid(self):
        p = CoincidenceProfile([0.0, 1.0, 2.0], [1, 2, 3], singles2=[4, 4, 4])
        assert len(p) == 3
        assert p.coincidences.dtype == float

    @pytest.mark.parametrize("kwargs, message", [
        (dict(positions=[0.0, 0.0, 1.0], coincidences=[1, 1, 1]), "strictly increasing"),
        (dict(positions=[0.0, 1.0], coincidences=[1, -1]), "non-negative"),
        (dict(positions=[0.0, 1.0], coincidences=[1, 1, 1]), "length"),
        (dict(positions=[0.0, 1.0], coincidences=[1, 1], singles1=[1]), "length"),
        (dict(positions=[], coincidences=[]), "non-empty"),
    ])
    def test_invalid(self, kwargs, message):
        with pytest.raises(ValueError, match=message):
            CoincidenceProfile(**kwargs)
