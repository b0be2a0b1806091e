import json
import math

import jsonschema
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from foampilot.llm import TokenUsage
from foampilot.metrics import (
    AVERAGE_LABEL,
    CoefficientError,
    FieldArray,
    FieldFileError,
    LengthMismatch,
    Report,
    ReportRow,
    TrialAggregate,
    ZeroReferenceNorm,
    aggregate_trials,
    coefficient_error,
    field_accuracy,
    read_field_file,
    render_report,
    report_from_json,
    report_schema,
    report_to_json,
)
from foampilot.toolserver import synthetic_output
from foampilot.workflow import WorkflowReport

# independently recomputed from 1 - ||(1.1,1.9,2.2)-(1,2,2)|| / ||(1,2,2)||
ACCURACY_ORACLE = 0.9183503419072274


def trial(converged=False, completed=False, iterations=0, tokens=0):
    if converged:
        state = "Converged"
    elif completed:
        state = "CompletedNotConverged"
    else:
        state = "Failed"
    return WorkflowReport(
        final_state=state, converged=converged, completed=completed,
        iterations=iterations, tokens=TokenUsage(tokens, 0), timeline=[])


class TestFieldArray:
    def test_interleaved_component_check(self):
        with pytest.raises(ValueError, match="divide"):
            FieldArray((1.0, 2.0, 3.0, 4.0, 5.0), components=2)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            FieldArray((1.0, float("nan")))
        with pytest.raises(ValueError, match="finite"):
            FieldArray((float("inf"),))

    def test_rejects_zero_components(self):
        with pytest.raises(ValueError, match="positive"):
            FieldArray((1.0,), components=0)

    def test_length(self):
        assert len(FieldArray((1, 2, 3, 4, 5, 6), components=3)) == 6


class TestFieldAccuracy:
    def test_identity_is_exactly_one(self):
        x = FieldArray((0.3, -1.7, 2.9, 4.4))
        assert field_accuracy(x, x) == 1.0

    def test_zero_candidate_three_four(self):
        assert field_accuracy(FieldArray((0.0, 0.0)),
                              FieldArray((3.0, 4.0))) == 0.0

    def test_hand_computed_oracle(self):
        candidate = FieldArray((1.1, 1.9, 2.2))
        reference = FieldArray((1.0, 2.0, 2.0))
        assert abs(field_accuracy(candidate, reference)
                   - ACCURACY_ORACLE) < 1e-9

    def test_poor_candidate_goes_negative(self):
        value = field_accuracy(FieldArray((10.0, 10.0)),
                               FieldArray((1.0, 1.0)))
        assert value == pytest.approx(-8.0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            field_accuracy(FieldArray((1.0,)), FieldArray((1.0, 2.0)))

    def test_component_mismatch(self):
        with pytest.raises(LengthMismatch):
            field_accuracy(FieldArray((1.0, 2.0), components=2),
                           FieldArray((1.0, 2.0), components=1))

    def test_zero_reference_norm(self):
        with pytest.raises(ZeroReferenceNorm):
            field_accuracy(FieldArray((1.0,)), FieldArray((0.0,)))

    _arrays = st.lists(
        st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
        min_size=1, max_size=20)

    @given(values=_arrays)
    def test_self_comparison_is_one(self, values):
        assume(math.fsum(v * v for v in values) > 0.0)
        x = FieldArray(tuple(values))
        assert field_accuracy(x, x) == 1.0

    @given(values=_arrays, scale=st.sampled_from([0.25, 0.5, 2.0, 8.0]))
    def test_scale_covariance(self, values, scale):
        assume(math.fsum(v * v for v in values) > 0.0)
        reference = FieldArray(tuple(values))
        candidate = FieldArray(tuple(v + 1.0 for v in values))
        plain = field_accuracy(candidate, reference)
        # power-of-two scaling shifts exponents only, so equality is exact
        scaled = field_accuracy(
            FieldArray(tuple(scale * v for v in candidate.values)),
            FieldArray(tuple(scale * v for v in reference.values)))
        assert scaled == plain

    @given(paired=st.lists(
        st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)),
        min_size=2, max_size=30), seed=st.randoms())
    def test_order_independence(self, paired, seed):
        assume(math.fsum(r * r for _, r in paired) > 0.0)
        straight = field_accuracy(FieldArray(tuple(c for c, _ in paired)),
                                  FieldArray(tuple(r for _, r in paired)))
        seed.shuffle(paired)
        shuffled = field_accuracy(FieldArray(tuple(c for c, _ in paired)),
                                  FieldArray(tuple(r for _, r in paired)))
        # compensated accumulation makes the sums exact, so no tolerance
        assert shuffled == straight


class TestCoefficientError:
    def test_identity(self):
        result = coefficient_error(0.875, 0.875)
        assert result.value == 0.0
        assert not result.near_zero_reference

    def test_ten_percent(self):
        assert coefficient_error(1.1, 1.0).value == pytest.approx(10.0)

    def test_near_zero_reference_reports_deviation(self):
        result = coefficient_error(0.02, 1e-9)
        assert result.near_zero_reference
        assert result.value == pytest.approx(0.02, rel=1e-6)
        assert "absolute deviation" in result.describe()

    def test_threshold_boundary(self):
        assert not coefficient_error(1.0, 1e-6).near_zero_reference
        assert coefficient_error(1.0, 0.99e-6).near_zero_reference

    def test_percent_formatting(self):
        assert coefficient_error(1.1, 1.0).describe().endswith("%")

    def test_sign_insensitive(self):
        assert (coefficient_error(-1.1, -1.0).value
                == pytest.approx(10.0))


class TestAggregateTrials:
    def test_eight_completed_one_converged_of_ten(self):
        reports = ([trial(converged=True, completed=True)]
                   + [trial(completed=True)] * 7
                   + [trial()] * 2)
        agg = aggregate_trials(reports)
        assert agg.completion_rate == 80.0
        assert agg.success_rate == 10.0
        assert agg.trials == 10

    def test_iteration_mean_matches_stated_list(self):
        iterations = [3, 5, 6, 5, 4, 6, 5, 4, 5, 5]
        reports = [trial(completed=True, iterations=i) for i in iterations]
        assert aggregate_trials(reports).mean_iterations == 4.8

    def test_all_converged_without_corrections(self):
        agg = aggregate_trials([trial(converged=True, completed=True)] * 5)
        assert agg.success_rate == 100.0
        assert agg.completion_rate == 100.0
        assert agg.mean_iterations == 0.0

    def test_converged_always_counts_completed(self):
        # inconsistent flags must not let completion undercut success
        agg = aggregate_trials([trial(converged=True, completed=False)])
        assert agg.completion_rate == 100.0

    def test_token_mean(self):
        reports = [trial(tokens=1000), trial(tokens=2000)]
        assert aggregate_trials(reports).mean_tokens == 1500.0

    def test_single_trial_equals_report(self):
        agg = aggregate_trials([trial(converged=True, completed=True,
                                      iterations=4, tokens=321)])
        assert agg.success_rate == 100.0
        assert agg.mean_iterations == 4.0
        assert agg.mean_tokens == 321.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_trials([])

    def test_inconsistent_aggregate_rejected(self):
        with pytest.raises(ValueError, match="below"):
            TrialAggregate(trials=1, converged=1, completed=0,
                           success_rate=100.0, completion_rate=0.0,
                           mean_iterations=0.0, mean_tokens=0.0)

    @given(st.lists(st.builds(
        trial,
        converged=st.booleans(),
        completed=st.booleans(),
        iterations=st.integers(0, 10),
        tokens=st.integers(0, 10**6)), min_size=1, max_size=25))
    def test_completion_never_undercuts_success(self, reports):
        agg = aggregate_trials(reports)
        assert agg.completion_rate >= agg.success_rate
        assert 0.0 <= agg.success_rate <= 100.0
        assert 0.0 <= agg.completion_rate <= 100.0


class TestReport:
    def sample(self):
        return Report(
            title="Accuracy across angles of attack",
            columns=("U accuracy", "p accuracy"),
            rows=(ReportRow("aoa0", (0.9983, 0.9660)),
                  ReportRow("aoa10", (0.9995, 0.9993))),
        )

    def test_row_width_enforced(self):
        with pytest.raises(ValueError, match="columns"):
            Report("t", ("a", "b"), (ReportRow("r", (1.0,)),))

    def test_single_row_has_no_average(self):
        report = Report("t", ("x",), (ReportRow("only", (1.0,)),))
        text = render_report(report)
        assert AVERAGE_LABEL not in text
        assert "only" in text

    def test_average_row_appended(self):
        text = render_report(self.sample())
        assert AVERAGE_LABEL in text
        last = text.strip().splitlines()[-1].split()
        assert last[0] == AVERAGE_LABEL
        # the table prints 4 decimals, so allow half a formatting step
        assert float(last[1]) == pytest.approx((0.9983 + 0.9995) / 2,
                                               abs=5e-5)
        assert float(last[2]) == pytest.approx((0.9660 + 0.9993) / 2,
                                               abs=5e-5)

    def test_fixed_width_layout(self):
        lines = render_report(self.sample()).splitlines()[1:]
        assert len({len(line) for line in lines}) == 1

    def test_header_names_present(self):
        text = render_report(self.sample())
        assert "U accuracy" in text and "p accuracy" in text

    def test_json_round_trip(self):
        report = self.sample()
        assert report_from_json(report_to_json(report)) == report

    def test_record_validates_against_schema(self):
        jsonschema.validate(report_to_json(self.sample()), report_schema())

    def test_schema_rejects_malformed_record(self):
        record = report_to_json(self.sample())
        del record["title"]
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(record, report_schema())

    def test_record_is_json_serializable(self):
        text = json.dumps(report_to_json(self.sample()))
        assert report_from_json(json.loads(text)) == self.sample()


class TestReadFieldFile:
    def test_raw_surface_file(self, tmp_path):
        path = tmp_path / "p_walls.raw"
        path.write_text(synthetic_output("p_walls.raw"))
        array = read_field_file(path)
        assert array.components == 1
        assert len(array) == 8
        assert array.name == "p_walls"
        assert all(v > 0 for v in array.values)

    def test_vector_surface_file(self, tmp_path):
        path = tmp_path / "U_walls.raw"
        rows = "\n".join(f"{i} {i} {i} 1.0 2.0 3.0" for i in range(4))
        path.write_text("# x y z Ux Uy Uz\n" + rows + "\n")
        array = read_field_file(path)
        assert array.components == 3
        assert len(array) == 12
        assert array.values[:3] == (1.0, 2.0, 3.0)

    def test_narrow_file_taken_wholesale(self, tmp_path):
        path = tmp_path / "column.txt"
        path.write_text("1.5\n2.5\n")
        array = read_field_file(path)
        assert array.components == 1
        assert array.values == (1.5, 2.5)

    def test_headers_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "data.raw"
        path.write_text("# header\n\n0 0 0 1.0\n\n# more\n0 0 0 2.0\n")
        assert read_field_file(path).values == (1.0, 2.0)

    def test_non_numeric_names_line(self, tmp_path):
        path = tmp_path / "bad.raw"
        path.write_text("0 0 0 1.0\n0 0 oops 2.0\n")
        with pytest.raises(FieldFileError, match=":2"):
            read_field_file(path)

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "ragged.raw"
        path.write_text("0 0 0 1.0\n0 0 2.0\n")
        with pytest.raises(FieldFileError, match="columns"):
            read_field_file(path)

    def test_header_only_file_rejected(self, tmp_path):
        path = tmp_path / "empty.raw"
        path.write_text("# x y z p\n")
        with pytest.raises(FieldFileError, match="no data"):
            read_field_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FieldFileError, match="cannot read"):
            read_field_file(tmp_path / "absent.raw")

    def test_file_compared_to_itself_scores_one(self, tmp_path):
        path = tmp_path / "p_walls.raw"
        path.write_text(synthetic_output("p_walls.raw"))
        assert field_accuracy(read_field_file(path),
                              read_field_file(path)) == 1.0


class TestCoefficientErrorDataclass:
    def test_flag_defaults_off(self):
        assert CoefficientError(5.0) == CoefficientError(5.0, False)
