"""
Tests for experiment configs, the runner and the command-line entry point.
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.data.results import TRACE_HEADER, read_trace_csv
from src.harness.experiment import expand_grid, load_experiment_config, parse_experiment_config
from src.harness.runner import ExperimentRunner
from src.main import EXIT_CONFIG, EXIT_DIVERGED, EXIT_ERROR, EXIT_OK, main
from src.utils.errors import ConfigurationError, ProblemError

REPO_ROOT = Path(__file__).parent.parent
GOLDEN = Path(__file__).parent / 'data' / 'libsvm'

SMALL_PROBLEM = {
    'source': 'synthetic', 'M': 3, 'n': 4, 'd': 4, 'noise': 0.1,
    'heterogeneity': 1.0, 'normalize_rows': True, 'seed': 1,
}


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    """Run inside a scratch directory so log files stay out of the repository."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def write_config(workdir):
    """Write an experiment document and return its path."""
    def factory(name='experiment', **fields):
        document = {
            'output': str(workdir / 'out' / name),
            'problem': dict(SMALL_PROBLEM),
            'algorithm': 'FedCRR',
            'gamma': '0.5/L',
            'epochs': 10,
        }
        document.update(fields)
        path = workdir / f'{name}.json'
        path.write_text(json.dumps(document))
        return path
    return factory


class TestExperimentConfig:
    """Test cases for config parsing and validation."""

    def test_defaults(self):
        """Missing optional fields take their defaults."""
        config = parse_experiment_config({'problem': SMALL_PROBLEM, 'gamma': 0.1}, default_name='demo')
        assert config.epochs == 100 and config.repeats == 1 and config.seed == 0
        assert config.output.endswith('demo')
        assert config.grid_size == 1

    def test_unknown_key_names_field(self):
        """Typos are rejected with the field path."""
        with pytest.raises(ConfigurationError, match="problem.heterogenity: unknown key"):
            parse_experiment_config({'problem': dict(SMALL_PROBLEM, heterogenity=1.0), 'gamma': 0.1})

    def test_list_outside_sweep_fields(self):
        """Only algorithm, gamma and compressor.k may be lists."""
        with pytest.raises(ConfigurationError, match="epochs"):
            parse_experiment_config({'problem': SMALL_PROBLEM, 'gamma': 0.1, 'epochs': [5, 10]})

    def test_empty_list(self):
        """An empty sweep list is a config error."""
        with pytest.raises(ConfigurationError, match="list must not be empty"):
            parse_experiment_config({'problem': SMALL_PROBLEM, 'gamma': [], 'algorithm': 'FedCRR'})

    def test_grid_expansion(self):
        """Two stepsizes and two k values give four grid points."""
        config = parse_experiment_config({
            'problem': SMALL_PROBLEM, 'gamma': [0.1, 0.2], 'compressor': {'kind': 'randk', 'k': [1, 2]},
        })
        assert expand_grid(config) == [
            (config.algorithms[0], 0.1, 1), (config.algorithms[0], 0.1, 2),
            (config.algorithms[0], 0.2, 1), (config.algorithms[0], 0.2, 2),
        ]

    def test_seed_override(self, write_config):
        """--seed replaces the file's seed."""
        assert load_experiment_config(write_config(seed=3), seed=11).seed == 11

    def test_invalid_json(self, workdir):
        """Malformed JSON is a configuration error."""
        path = workdir / 'broken.json'
        path.write_text('{"gamma": ')
        with pytest.raises(ConfigurationError, match="invalid JSON"):
            load_experiment_config(path)

    def test_fedrr_with_compression(self):
        """FedRR cannot be combined with a lossy compressor."""
        with pytest.raises(ConfigurationError, match="compressor.kind"):
            parse_experiment_config({
                'problem': SMALL_PROBLEM, 'gamma': 0.1, 'algorithm': 'FedRR',
                'compressor': {'kind': 'randk', 'k': 1},
            })

    @pytest.mark.parametrize('path', sorted((REPO_ROOT / 'config' / 'experiments').glob('*.json')),
                             ids=lambda p: p.stem)
    def test_bundled_experiments_parse(self, path):
        """Every shipped experiment file validates."""
        assert load_experiment_config(path).grid_size >= 1


class TestRunCommand:
    """Test cases for single runs through the CLI."""

    def test_minimal_run(self, write_config, capsys):
        """T = 10, one repeat: header line, column line and 11 data rows."""
        path = write_config()
        assert main(['run', str(path)]) == EXIT_OK
        output = path.parent / 'out' / 'experiment'
        lines = (output.parent / 'experiment.trace.csv').read_text().split('\n')
        assert lines[0] == TRACE_HEADER
        assert lines[1] == 'epoch,seed,cum_bits,sq_dist,f_gap,lyapunov'
        data = [line for line in lines[2:] if line]
        assert len(data) == 11
        assert all(line.endswith(',') for line in data)
        assert (output.parent / 'experiment.theory.json').exists()
        assert json.loads((output.parent / 'experiment.config.json').read_text())['epochs'] == 10
        assert "experiment.trace.csv" in capsys.readouterr().out

    def test_repeats_use_consecutive_seeds(self, write_config):
        """repeats = 3 writes seeds seed, seed+1, seed+2 with independent traces."""
        path = write_config(repeats=3, seed=4, compressor={'kind': 'randk', 'k': 1})
        assert main(['run', str(path)]) == EXIT_OK
        frame = read_trace_csv(path.parent / 'out' / 'experiment.trace.csv')
        assert sorted(frame['seed'].unique()) == [4, 5, 6]
        final = frame[frame['epoch'] == 10].set_index('seed')['sq_dist']
        assert final[4] != final[5]

        summary = pd.read_csv(path.parent / 'out' / 'experiment.summary.csv')
        assert len(summary) == 11 and (summary['n_seeds'] == 3).all()
        assert summary['mean_sq_dist'].iloc[-1] == pytest.approx(final.mean(), rel=1e-12)
        seed_bits = frame[frame['seed'] == 4].sort_values('epoch')['cum_bits'].to_numpy()
        np.testing.assert_array_equal(summary['cum_bits'].to_numpy(), seed_bits)

    def test_cli_seed_override(self, write_config):
        """--seed changes every repeat's seed."""
        path = write_config(repeats=2)
        assert main(['--seed', '20', 'run', str(path)]) == EXIT_OK
        frame = read_trace_csv(path.parent / 'out' / 'experiment.trace.csv')
        assert sorted(frame['seed'].unique()) == [20, 21]

    def test_condition_violation_warns(self, write_config, capsys):
        """alpha above 1/(omega+1) runs anyway and warns about the Theorem 3 condition."""
        path = write_config(algorithm='FedCRR_VR', alpha=0.9, eta=0.1, compressor={'kind': 'randk', 'k': 1})
        assert main(['run', str(path)]) == EXIT_OK
        assert "Theorem 3 condition" in capsys.readouterr().err
        frame = read_trace_csv(path.parent / 'out' / 'experiment.trace.csv')
        assert frame['lyapunov'].notna().all()

    def test_quiet_suppresses_warnings(self, write_config, capsys):
        """--quiet hides the condition warnings."""
        path = write_config(algorithm='FedCRR_VR', alpha=0.9, eta=0.1, compressor={'kind': 'randk', 'k': 1})
        assert main(['--quiet', 'run', str(path)]) == EXIT_OK
        assert "Theorem 3 condition" not in capsys.readouterr().err

    def test_bad_config_exit_code(self, write_config, capsys):
        """Unknown keys exit with status 2 and name the field."""
        path = write_config(gama=0.1)
        assert main(['run', str(path)]) == EXIT_CONFIG
        assert "gama" in capsys.readouterr().err

    def test_run_rejects_grid(self, write_config):
        """A list-valued field needs the sweep command."""
        path = write_config(gamma=[0.1, 0.2])
        assert main(['run', str(path)]) == EXIT_CONFIG

    def test_divergence_exit_code(self, write_config, capsys):
        """A runaway stepsize exits with status 3 after flushing the partial trace."""
        path = write_config(gamma='50/L', epochs=500)
        assert main(['run', str(path)]) == EXIT_DIVERGED
        frame = read_trace_csv(path.parent / 'out' / 'experiment.trace.csv')
        assert 0 < len(frame) < 501
        assert "diverged" in capsys.readouterr().err

    def test_runtime_error_exit_code(self, write_config, mocker):
        """Other package errors exit with status 1."""
        mocker.patch('src.main.ExperimentRunner.run', side_effect=ProblemError("problem not strongly convex"))
        assert main(['run', str(write_config())]) == EXIT_ERROR

    def test_missing_dataset_exit_code(self, write_config, workdir, capsys):
        """A LIBSVM path that does not exist exits with status 2 and names problem.path."""
        problem = {'source': 'libsvm', 'path': str(workdir / 'absent.libsvm'), 'M': 2}
        assert main(['run', str(write_config(problem=problem))]) == EXIT_CONFIG
        assert "problem.path" in capsys.readouterr().err

    def test_malformed_dataset_exit_code(self, write_config, capsys):
        """A dataset that fails to parse is a configuration error, for run and theory alike."""
        problem = {'source': 'libsvm', 'path': str(GOLDEN / 'bad_label.libsvm'), 'M': 1}
        path = write_config(problem=problem)
        assert main(['run', str(path)]) == EXIT_CONFIG
        assert main(['theory', str(path)]) == EXIT_CONFIG
        assert "problem.path" in capsys.readouterr().err

    def test_missing_config(self, workdir):
        """A missing config file is a configuration error."""
        assert main(['run', str(workdir / 'nowhere.json')]) == EXIT_CONFIG

    def test_byte_identical_reruns(self, write_config):
        """Running the same config twice writes identical CSV bytes."""
        path = write_config(compressor={'kind': 'randk', 'k': 2}, repeats=2)
        trace_path = path.parent / 'out' / 'experiment.trace.csv'
        assert main(['run', str(path)]) == EXIT_OK
        first = trace_path.read_bytes()
        assert main(['--serial', 'run', str(path)]) == EXIT_OK
        assert trace_path.read_bytes() == first
        assert b'\r\n' not in first


class TestSweepCommand:
    """Test cases for parameter sweeps."""

    def test_method_comparison(self, write_config):
        """Three algorithms with one compressor give three traces with identical bit columns."""
        path = write_config(algorithm=['FedCRR', 'FedCRR_VR', 'FedCRR_VR2'], alpha='auto', eta='auto',
                            compressor={'kind': 'randk', 'k': 2})
        assert main(['sweep', str(path)]) == EXIT_OK
        manifest = pd.read_csv(path.parent / 'out' / 'experiment.manifest.csv')
        assert list(manifest['algorithm']) == ['FedCRR', 'FedCRR_VR', 'FedCRR_VR2']
        bits = [read_trace_csv(f"{prefix}.trace.csv")['cum_bits'].tolist() for prefix in manifest['prefix']]
        assert bits[0] == bits[1] == bits[2]

    def test_two_by_two_grid(self, write_config):
        """2 stepsizes x 2 k values: four distinct prefixes, each listed once."""
        path = write_config(gamma=[0.1, 0.2], compressor={'kind': 'randk', 'k': [1, 2]})
        assert main(['sweep', str(path)]) == EXIT_OK
        manifest = pd.read_csv(path.parent / 'out' / 'experiment.manifest.csv')
        assert len(manifest) == 4
        assert manifest['prefix'].is_unique
        assert sorted(zip(manifest['gamma'], manifest['k'])) == [(0.1, 1), (0.1, 2), (0.2, 1), (0.2, 2)]

    def test_list_on_other_field(self, write_config):
        """Lists outside the sweep fields fail with status 2."""
        path = write_config(shuffle=['RR', 'SO'])
        assert main(['sweep', str(path)]) == EXIT_CONFIG


class TestTheoryAndParseCheck:
    """Test cases for the theory and parse-check commands."""

    def test_small_problem_report(self, write_config, capsys):
        """n <= 6 writes an exact radius and trains nothing."""
        path = write_config()
        assert main(['theory', str(path)]) == EXIT_OK
        report = json.loads((path.parent / 'out' / 'experiment.theory.json').read_text())
        assert report['sigma_rad_exact'] is not None
        assert report['sigma_rad_exact'] <= report['sigma_rad_bound']
        assert 'scaling' in report and 'validity' in report
        assert not (path.parent / 'out' / 'experiment.trace.csv').exists()
        assert "THEORY REPORT" in capsys.readouterr().out

    def test_homogeneous_large_problem_report(self, write_config):
        """Identical clients with n = 50: no drift and no exact radius."""
        problem = {'source': 'synthetic', 'M': 4, 'n': 50, 'd': 4, 'identical_clients': True,
                   'normalize_rows': True, 'lambda': 10.0, 'seed': 3}
        path = write_config(problem=problem, algorithm='FedCRR_VR2', gamma='thm4', alpha='auto', eta='auto',
                            compressor={'kind': 'randk', 'k': 2})
        assert main(['theory', str(path)]) == EXIT_OK
        report = json.loads((path.parent / 'out' / 'experiment.theory.json').read_text())
        assert report['sigma_rad_exact'] is None
        assert report['sigma_rad_bound'] > 0
        assert max(report['grad_norms']) <= 1e-20

    def test_parse_check(self, workdir, capsys):
        """parse-check prints the dataset summary."""
        path = GOLDEN / 'valid_basic.libsvm'
        assert main(['parse-check', str(path)]) == EXIT_OK
        assert "2 rows, 3 features, 3 nonzeros, labels in [-1, 1]" in capsys.readouterr().out

    def test_parse_check_failure(self, workdir, capsys):
        """Malformed files exit with status 1 and the parser message."""
        path = GOLDEN / 'bad_label.libsvm'
        assert main(['parse-check', str(path)]) == EXIT_ERROR
        assert "non-numeric token 'x' at line 1, column 1" in capsys.readouterr().err

    def test_bundled_sample_parses(self, workdir):
        """The sample dataset under data/ passes parse-check."""
        assert main(['parse-check', str(REPO_ROOT / 'data' / 'sample.libsvm')]) == EXIT_OK


class TestExperimentRunner:
    """Test cases for the runner used by the CLI."""

    def test_parallel_and_serial_write_same_bytes(self, write_config):
        """Thread-pool clients produce byte-identical CSV files."""
        config = load_experiment_config(write_config(algorithm='FedCRR_VR', alpha=0.5, eta=0.5,
                                                     compressor={'kind': 'randk', 'k': 2}))
        serial = ExperimentRunner(config, parallel=False).run()
        serial_bytes = open(f"{serial.prefix}.trace.csv", 'rb').read()
        parallel = ExperimentRunner(config, parallel=True).run()
        assert open(f"{parallel.prefix}.trace.csv", 'rb').read() == serial_bytes

    def test_warning_logged(self, write_config, caplog):
        """Violated conditions of the chosen algorithm are logged as warnings."""
        config = load_experiment_config(write_config(algorithm='FedCRR_VR', alpha=0.9, eta=0.1,
                                                     compressor={'kind': 'randk', 'k': 1}))
        with caplog.at_level(logging.WARNING):
            ExperimentRunner(config).run()
        assert any("Theorem 3 condition violated" in record.message for record in caplog.records)

    def test_outcome_reports_divergence(self, write_config):
        """Diverged repeats are listed with their seed."""
        config = load_experiment_config(write_config(gamma='50/L', epochs=500))
        outcome = ExperimentRunner(config).run()
        assert outcome.diverged
        assert outcome.divergence_reasons[0].startswith("seed 0, epoch ")


if __name__ == "__main__":
    pytest.main([__file__])
