import json
import logging
import math
import os
import tempfile
import unittest
from dataclasses import replace

import numpy as np

from src.config import Config
from src.processing import EXIT_ERROR, EXIT_FAIL, EXIT_NO_SCENARIOS, EXIT_OK
from src.stats import SuiteStats
from src.utils import ScenarioLoggerAdapter
from src.aharmonic_lab import (
    ConfigError,
    DomainError,
    StageError,
    VERDICT_NAMES,
    apply_overrides,
    build_chart,
    find_scenarios,
    load_scenario,
    run_scenario,
    scenario_from_mapping,
)
from src.aharmonic_lab.io_results import read_grid, read_profile_csv, to_json_text, write_grid
from src.aharmonic_lab.models import PROFILE_COLUMNS
from src.aharmonic_lab.pipeline import _cordes_diagnostics, stage
from src.aharmonic_lab.scenarios import read_document

logging.disable(logging.CRITICAL)

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def _document(**changes):
    document = {
        "schema_version": 1,
        "name": "tiny",
        "chart": {"topology": "annulus_in_disk", "R": 2.0, "lambda": "flat"},
        "model": {"name": "p_harmonic", "params": {"p": 2}},
        "boundary": {"t1": 0.0, "t2": 1.0},
    }
    document.update(changes)
    return document


class TestScenarioValidation(unittest.TestCase):

    def test_minimal_document_gets_defaults(self):
        scenario = scenario_from_mapping(_document())
        config = Config()
        self.assertEqual(scenario.name, "tiny")
        self.assertEqual(scenario.n_samples, config.n_samples)
        self.assertEqual(scenario.verdicts, VERDICT_NAMES)
        self.assertEqual(scenario.chart.lambda_spec, {"kind": "flat"})
        self.assertFalse(scenario.export_fields)

    def test_grid_shorthand(self):
        scenario = scenario_from_mapping(_document(chart={"R": 3.0, "grid": 48}))
        self.assertEqual((scenario.chart.n_sigma, scenario.chart.n_theta), (48, 48))

    def test_rejects_bad_documents(self):
        bad = [
            _document(schema_version=2),
            _document(boundary={"t1": 1.0, "t2": 1.0}),
            _document(boundary={"t1": 0.0}),
            _document(verdicts=["log_convexity", "no_such_verdict"]),
            _document(solver={"scheme": "multigrid"}),
            _document(solver={"relaxation": 1.2}),
            _document(chart={"R": 2.0, "lambda": {"kind": "user"}}),
            _document(chart={"R": 2.0, "topology": "patch"}),
            _document(chart={"R": "two"}),
            _document(source="spline"),
            _document(model={"params": {"p": 2}}),
        ]
        for document in bad:
            with self.subTest(document=document):
                with self.assertRaises(ConfigError):
                    scenario_from_mapping(document)

    def test_non_mapping(self):
        with self.assertRaises(ConfigError):
            scenario_from_mapping(["not", "a", "mapping"])

    def test_overrides_take_precedence(self):
        scenario = apply_overrides(scenario_from_mapping(_document()), grid=40, samples=11, tol=1e-2, seed=7)
        self.assertEqual((scenario.chart.n_sigma, scenario.chart.n_theta), (40, 40))
        self.assertEqual(scenario.n_samples, 11)
        self.assertEqual(scenario.tol, 1e-2)
        self.assertEqual(scenario.seed, 7)

    def test_overrides_keep_unset_values(self):
        scenario = scenario_from_mapping(_document(tol=5e-3))
        self.assertEqual(apply_overrides(scenario), scenario)


class TestScenarioFiles(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_json_and_yaml_read_alike(self):
        json_path = os.path.join(self.dir, "a.json")
        yaml_path = os.path.join(self.dir, "a.yaml")
        with open(json_path, "w", encoding="utf-8") as handle:
            json.dump(_document(), handle)
        with open(yaml_path, "w", encoding="utf-8") as handle:
            handle.write("schema_version: 1\nname: tiny\n"
                         "chart: {topology: annulus_in_disk, R: 2.0, lambda: flat}\n"
                         "model: {name: p_harmonic, params: {p: 2}}\n"
                         "boundary: {t1: 0.0, t2: 1.0}\n")
        self.assertEqual(read_document(json_path), read_document(yaml_path))

    def test_unsupported_and_broken_files(self):
        text_path = os.path.join(self.dir, "a.txt")
        broken_path = os.path.join(self.dir, "b.json")
        with open(text_path, "w", encoding="utf-8") as handle:
            handle.write("x")
        with open(broken_path, "w", encoding="utf-8") as handle:
            handle.write("{")
        for path in (text_path, broken_path, os.path.join(self.dir, "missing.json")):
            with self.subTest(path=path):
                with self.assertRaises(ConfigError):
                    read_document(path)

    def test_find_scenarios_is_sorted_and_flat(self):
        for name in ("b.yaml", "a.json", "c.yml", "notes.txt"):
            with open(os.path.join(self.dir, name), "w", encoding="utf-8") as handle:
                handle.write("{}")
        os.makedirs(os.path.join(self.dir, "models"))
        with open(os.path.join(self.dir, "models", "m.yaml"), "w", encoding="utf-8") as handle:
            handle.write("{}")
        found = [os.path.basename(path) for path in find_scenarios(self.dir)]
        self.assertEqual(found, ["a.json", "b.yaml", "c.yml"])

    def test_missing_directory(self):
        with self.assertRaises(ConfigError):
            find_scenarios(os.path.join(self.dir, "nowhere"))

    def test_shipped_scenarios_validate(self):
        paths = find_scenarios(CONFIGS)
        self.assertGreaterEqual(len(paths), 10)
        for path in paths:
            with self.subTest(path=path):
                scenario = load_scenario(path)
                self.assertLess(scenario.t1, scenario.t2)
                self.assertEqual(scenario.path, path)


class TestResultFiles(unittest.TestCase):

    def test_json_is_sorted_and_nan_free(self):
        text = to_json_text({"b": np.float64("nan"), "a": [np.int64(1), math.inf], "c": np.array([0.5])})
        self.assertEqual(json.loads(text), {"a": [1, None], "b": None, "c": [0.5]})
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertNotIn("NaN", text)
        self.assertEqual(text, to_json_text({"c": [0.5], "a": [1, None], "b": None}))

    def test_grid_dump(self):
        chart = build_chart(2.0, 16, 20, {"kind": "flat"})
        field = np.outer(chart.sigma, np.cos(chart.theta))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_grid(os.path.join(tmp, "u.grid"), chart, field)
            dump = read_grid(path)
            np.testing.assert_array_equal(dump.values, field)
            np.testing.assert_array_equal(dump.sigma, chart.sigma)
            np.testing.assert_array_equal(dump.theta, chart.theta)

            with open(path, "rb") as handle:
                data = handle.read()
            truncated = os.path.join(tmp, "short.grid")
            with open(truncated, "wb") as handle:
                handle.write(data[:-8])
            foreign = os.path.join(tmp, "foreign.grid")
            with open(foreign, "wb") as handle:
                handle.write(b"NOTAGRID" + data[8:])
            for bad in (truncated, foreign):
                with self.subTest(path=bad):
                    with self.assertRaises(DomainError):
                        read_grid(bad)

    def test_grid_shape_must_match(self):
        chart = build_chart(2.0, 16, 20, {"kind": "flat"})
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(DomainError):
                write_grid(os.path.join(tmp, "u.grid"), chart, np.zeros((20, 16)))

    def test_profile_columns_are_checked(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "profile.csv")
            with open(path, "w", encoding="utf-8") as handle:
                handle.write("t,L\n0.5,1.0\n")
            with self.assertRaises(DomainError):
                read_profile_csv(path)


class TestRunScenario(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        scenario = apply_overrides(load_scenario(os.path.join(CONFIGS, "flat_p2.json")), grid=32, samples=9, seed=11)
        cls.bundle = run_scenario(scenario, cls.tmp.name)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_files(self):
        out = os.path.join(self.tmp.name, "flat_p2")
        self.assertEqual(self.bundle.output_dir, out)
        for name in ("profile.csv", "verdicts.json", "diagnostics.json", "solution.grid", "solution.csv"):
            with self.subTest(name=name):
                self.assertTrue(os.path.isfile(os.path.join(out, name)))
        frame = read_profile_csv(os.path.join(out, "profile.csv"))
        self.assertEqual(list(frame.columns), list(PROFILE_COLUMNS))
        self.assertEqual(len(frame), 9)
        self.assertEqual(read_grid(os.path.join(out, "solution.grid")).values.shape, (32, 32))

    def test_oracle_agrees(self):
        oracle = self.bundle.diagnostics["oracle"]
        self.assertAlmostEqual(oracle["flux_constant"], 1.0 / math.log(2.0), places=8)
        self.assertLess(oracle["max_error"], 1e-6)
        self.assertLess(oracle["length_rel_error"], 2e-2)

    def test_log_convexity_is_evaluated(self):
        verdict = {v.name: v for v in self.bundle.verdicts}["log_convexity"]
        self.assertNotEqual(verdict.status.value, "not_applicable")
        self.assertGreater(verdict.margin, -0.05)

    def test_cordes_sampling_follows_the_scenario_seed(self):
        cordes = self.bundle.diagnostics["cordes"]
        self.assertEqual(cordes["claim"]["seed"], 11)
        self.assertEqual(cordes["discriminant"]["seed"], 12)
        self.assertEqual(cordes["claim"]["n_samples"], Config().scenario_cordes_samples)
        self.assertEqual(cordes["claim"]["violations"], 0)
        self.assertEqual(cordes["discriminant"]["violations"], 0)

        config = replace(Config(), scenario_cordes_samples=2000)
        model = self.bundle.model
        self.assertEqual(_cordes_diagnostics(model, 3, config), _cordes_diagnostics(model, 3, config))
        self.assertNotEqual(_cordes_diagnostics(model, 3, config)["claim"]["worst_slack"],
                            _cordes_diagnostics(model, 4, config)["claim"]["worst_slack"])

    def test_summary(self):
        summary = self.bundle.summary()
        self.assertEqual(summary["scenario"], "flat_p2")
        self.assertEqual(set(summary["statuses"]), set(VERDICT_NAMES))
        self.assertEqual(summary["exit_code"], self.bundle.exit_code)
        self.assertIn(self.bundle.exit_code, (EXIT_OK, EXIT_FAIL))

    def test_diagnostics_file_is_deterministic(self):
        path = os.path.join(self.bundle.output_dir, "diagnostics.json")
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
        self.assertEqual(text, to_json_text(self.bundle.diagnostics))
        self.assertIn("complex", json.loads(text))


class TestStage(unittest.TestCase):

    def test_wraps_numerical_failures(self):
        with self.assertRaises(StageError) as caught:
            with stage("solver"):
                raise ZeroDivisionError("boom")
        self.assertEqual(caught.exception.stage, "solver")
        self.assertIsInstance(caught.exception.cause, ZeroDivisionError)

    def test_does_not_rewrap(self):
        with self.assertRaises(StageError) as caught:
            with stage("outer"):
                with stage("inner"):
                    raise DomainError("bad")
        self.assertEqual(caught.exception.stage, "inner")

    def test_ignores_programming_errors(self):
        with self.assertRaises(KeyError):
            with stage("model"):
                raise KeyError("x")


class TestScenarioLoggerAdapter(unittest.TestCase):

    def test_prefixes_the_scenario_name(self):
        log = ScenarioLoggerAdapter(logging.getLogger("lab.test"), "bump_p3")
        self.assertEqual(log.process("solved", {"stacklevel": 2}), ("- bump_p3 - solved", {"stacklevel": 2}))

    def test_without_scenario(self):
        log = ScenarioLoggerAdapter(logging.getLogger("lab.test"))
        self.assertEqual(log.process("solved", {}), ("solved", {}))


class TestSuiteStats(unittest.TestCase):

    @staticmethod
    def _summary(name, exit_code):
        status = "fail" if exit_code else "pass"
        return {
            "scenario": name,
            "model": "p_harmonic",
            "statuses": {"log_convexity": status},
            "margins": {"log_convexity": -0.1 if exit_code else 0.2},
            "exit_code": exit_code,
        }

    def test_exit_codes(self):
        self.assertEqual(EXIT_NO_SCENARIOS, 2)
        self.assertEqual(SuiteStats().exit_code, EXIT_NO_SCENARIOS)

        stats = SuiteStats(scenarios_found=2)
        stats.add_summary(self._summary("a", 0))
        self.assertEqual(stats.exit_code, EXIT_OK)
        stats.add_summary(self._summary("b", 1))
        self.assertEqual(stats.exit_code, EXIT_FAIL)
        stats.add_error("c", "[solver] SolverError: no convergence")
        self.assertEqual(stats.exit_code, EXIT_ERROR)

    def test_payload_and_frame(self):
        stats = SuiteStats(scenarios_found=2)
        stats.add_summary(self._summary("b", 1))
        stats.add_error("a", "broken")
        payload = stats.to_payload()
        self.assertEqual([row["scenario"] for row in payload["scenarios"]], ["a", "b"])
        self.assertEqual(payload["counts"], {"fail": 1})
        self.assertEqual(payload["errors"], 1)
        self.assertEqual(payload["exit_code"], EXIT_ERROR)

        frame = stats.frame()
        self.assertEqual(list(frame["scenario"]), ["a", "b"])
        self.assertEqual(frame.loc[0, "log_convexity"], "error")
        self.assertEqual(frame.loc[1, "log_convexity"], "fail")
        for verdict in VERDICT_NAMES:
            self.assertIn(f"{verdict}_margin", frame.columns)


if __name__ == "__main__":
    unittest.main()
