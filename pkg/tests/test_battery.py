import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rct_lab.battery import (
    BatteryParams,
    OcvCurve,
    RintState,
    cv_c_rate,
    default_ocv_curve,
    load_ocv_csv,
    ocv_at,
    resistance_from_measurement,
)
from rct_lab.errors import DomainError, NegativeCurrentError, TraceFormatError, UnmeasurableResistanceError

positive = st.floats(min_value=1e-4, max_value=1e3, allow_nan=False)


class TestOcvLookup:
    def test_knot_identity(self, linear_ocv):
        assert ocv_at(linear_ocv, 0.0) == 3.0

    def test_linear_midpoint(self, linear_ocv):
        assert ocv_at(linear_ocv, 0.5) == pytest.approx(3.6, abs=1e-12)

    def test_three_knot_interpolation(self):
        curve = OcvCurve(((0.0, 3.0), (0.5, 3.8), (1.0, 4.2)))
        # halfway between 3.8 and 4.2
        assert ocv_at(curve, 0.75) == pytest.approx(0.5 * (3.8 + 4.2), abs=1e-12)

    def test_array_matches_scalar(self, ocv):
        socs = np.linspace(0, 1, 37)
        np.testing.assert_allclose(ocv_at(ocv, socs), [ocv_at(ocv, float(s)) for s in socs], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("soc", [-0.01, 1.01, float("nan")])
    def test_out_of_range(self, ocv, soc):
        with pytest.raises(DomainError):
            ocv_at(ocv, np.array([soc]))

    def test_callable(self, linear_ocv):
        assert linear_ocv(0.25) == ocv_at(linear_ocv, 0.25)

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=30))
    def test_monotone_in_soc(self, socs):
        curve = default_ocv_curve()
        socs = sorted(socs)
        values = ocv_at(curve, np.array(socs))
        assert np.all(np.diff(values) >= 0)


class TestOcvCurveValidation:
    def test_rejects_unsorted(self):
        with pytest.raises(DomainError):
            OcvCurve(((0.0, 3.0), (0.6, 3.7), (0.5, 3.8), (1.0, 4.2)))

    def test_rejects_decreasing_voltage(self):
        with pytest.raises(DomainError):
            OcvCurve(((0.0, 3.5), (0.5, 3.4), (1.0, 4.2)))

    def test_requires_full_coverage(self):
        with pytest.raises(DomainError):
            OcvCurve(((0.1, 3.0), (1.0, 4.2)))

    def test_shipped_curve_shape(self, ocv):
        knots, volts = ocv.soc_knots, ocv.ocv_knots
        slopes = np.diff(volts) / np.diff(knots)
        mid = (knots[:-1] >= 0.2) & (knots[1:] <= 0.8)
        assert slopes[0] > slopes[mid].max()
        assert volts[0] == 3.0 and volts[-1] == 4.2

    def test_csv_round_trip(self, tmp_path, ocv):
        path = tmp_path / "ocv.csv"
        path.write_text("soc,ocv_v\n" + "".join(f"{s!r},{v!r}\n" for s, v in ocv.points))
        assert load_ocv_csv(path) == ocv

    def test_csv_bad_row_names_line(self, tmp_path):
        path = tmp_path / "ocv.csv"
        path.write_text("soc,ocv_v\n0.0,3.0\n0.5,abc\n1.0,4.2\n")
        with pytest.raises(TraceFormatError, match=":3:"):
            load_ocv_csv(path)


class TestCvCRate:
    def test_zero_overpotential(self):
        assert cv_c_rate(4.2, 4.2, 0.05, 4.8) == 0.0

    @pytest.mark.parametrize("v, ocv, r, cap", [(4.2, 4.1, 0.05, 4.8), (4.2, 4.15, 0.1, 4.8), (3.9, 3.7, 0.02, 100.0)])
    def test_matches_ohms_law(self, v, ocv, r, cap):
        amps = (v - ocv) / r
        assert cv_c_rate(v, ocv, r, cap) == pytest.approx(amps / cap, rel=1e-12)

    def test_known_values(self):
        assert cv_c_rate(4.2, 4.1, 0.05, 4.8) == pytest.approx(0.4166666666666, rel=1e-10)
        assert cv_c_rate(4.2, 4.15, 0.1, 4.8) == pytest.approx(0.1041666666666, rel=1e-10)

    def test_terminal_below_ocv(self):
        with pytest.raises(NegativeCurrentError):
            cv_c_rate(4.0, 4.1, 0.05, 4.8)

    @pytest.mark.parametrize("r, cap", [(0.0, 4.8), (-0.1, 4.8), (0.05, 0.0)])
    def test_invalid_parameters(self, r, cap):
        with pytest.raises(DomainError):
            cv_c_rate(4.2, 4.1, r, cap)

    @given(st.floats(3.0, 4.1), st.floats(1e-3, 0.5), st.floats(1e-3, 0.5))
    def test_monotone_directions(self, ocv, r1, r2):
        v = 4.2
        lo, hi = sorted((r1, r2))
        if hi > lo:
            assert cv_c_rate(v, ocv, lo, 4.8) > cv_c_rate(v, ocv, hi, 4.8)
        assert cv_c_rate(v, ocv, r1, 4.8) > cv_c_rate(v, ocv + 0.05, r1, 4.8)
        assert cv_c_rate(v + 0.05, ocv, r1, 4.8) > cv_c_rate(v, ocv, r1, 4.8)


class TestResistanceFromMeasurement:
    def test_direct(self):
        assert resistance_from_measurement(4.2, 4.1, 2.0) == pytest.approx(0.05, rel=1e-12)

    def test_zero_overpotential(self):
        assert resistance_from_measurement(4.0, 4.0, 1.0) == 0.0

    def test_small_current(self):
        assert resistance_from_measurement(4.2, 4.19, 0.24) == pytest.approx(0.01 / 0.24, rel=1e-12)

    def test_zero_current(self):
        with pytest.raises(UnmeasurableResistanceError):
            resistance_from_measurement(4.2, 4.1, 0.0)

    @given(positive, positive, st.floats(2.5, 4.5))
    def test_round_trip(self, r, i, ocv):
        assert resistance_from_measurement(ocv + r * i, ocv, i) == pytest.approx(r, rel=1e-12)


class TestParams:
    def test_defaults(self, battery):
        assert battery.capacity_ah == 4.8
        assert battery.cutoff_current_a == pytest.approx(0.24)

    @pytest.mark.parametrize("kw", [{"capacity_ah": 0}, {"cutoff_voltage_v": -1}, {"cutoff_current_c": 1.5}])
    def test_validation(self, kw):
        with pytest.raises(DomainError):
            BatteryParams(**kw)

    def test_rint_state_validation(self):
        with pytest.raises(DomainError):
            RintState(soc=1.2, resistance_ohm=0.05, temperature_c=25)
        with pytest.raises(DomainError):
            RintState(soc=0.5, resistance_ohm=0.0, temperature_c=25)
