"""Unit tests for configuration module."""

import tempfile
from pathlib import Path

import pytest

from pwavg.core.config import IntegratorConfig, RunConfig, RuntimeConfig, ShootingConfig


class TestConfig:
    """Test configuration loading and validation."""

    def test_config_from_yaml(self, sample_config):
        """Test loading configuration from YAML."""
        assert isinstance(sample_config, RunConfig)
        assert sample_config.integrator.rtol == 1e-10
        assert sample_config.averaging.grid == 50
        assert sample_config.shooting.eps_list == [1e-1, 1e-2, 1e-3, 1e-4]

    def test_yaml_matches_defaults(self, sample_config):
        """config.yaml documents exactly the built-in defaults."""
        assert sample_config.dict() == RunConfig().dict()

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            RunConfig.from_yaml(tmp_path / "absent.yaml")

    def test_config_validation(self):
        """Test configuration validation."""
        with pytest.raises(ValueError):
            IntegratorConfig(rtol=0.0)

        with pytest.raises(ValueError):
            IntegratorConfig(tol_event=-1e-12)

        with pytest.raises(ValueError):
            ShootingConfig(eps_list=[1e-2, 1e-1])

        with pytest.raises(ValueError):
            ShootingConfig(eps_list=[1e-1, 0.0])

    def test_config_to_yaml(self, sample_config):
        """Test saving configuration to YAML."""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.yaml', delete=False) as f:
            temp_path = f.name

        try:
            sample_config.to_yaml(temp_path)

            loaded_config = RunConfig.from_yaml(temp_path)
            assert loaded_config.integrator.rtol == sample_config.integrator.rtol
            assert loaded_config.shooting.eps_list == sample_config.shooting.eps_list
        finally:
            Path(temp_path).unlink()

    def test_update_section(self, sample_config):
        """Test updating one section."""
        new_config = sample_config.update_section("averaging", grid=10, zero_tol=1e-12)

        assert new_config.averaging.grid == 10
        assert new_config.averaging.zero_tol == 1e-12
        # Original should be unchanged
        assert sample_config.averaging.grid == 50

    def test_update_section_rejects_unknown(self, sample_config):
        with pytest.raises(ValueError):
            sample_config.update_section("averaging", bogus=1)
        with pytest.raises(ValueError):
            sample_config.update_section("nothing", grid=1)

    def test_with_overrides(self, sample_config):
        config = sample_config.with_overrides(["integrator.rtol=1e-8", "output.formats=[csv]", "runtime.threads=2"])
        assert config.integrator.rtol == 1e-8
        assert config.output.formats == ["csv"]
        assert config.runtime.threads == 2

    def test_with_overrides_bad_syntax(self, sample_config):
        with pytest.raises(ValueError):
            sample_config.with_overrides(["rtol=1e-8"])
        with pytest.raises(ValueError):
            sample_config.with_overrides(["output.formats=[xml]"])

    def test_tightened(self):
        tight = IntegratorConfig().tightened(10.0)
        assert tight.rtol == pytest.approx(1e-11)
        assert tight.atol == pytest.approx(1e-13)
        assert tight.tol_event == IntegratorConfig().tol_event

    def test_worker_count_env_cap(self, monkeypatch):
        monkeypatch.setenv("PWAVG_THREADS", "2")
        assert RuntimeConfig(threads=8).worker_count() == 2
        assert RuntimeConfig().worker_count() == 2
        monkeypatch.delenv("PWAVG_THREADS")
        assert RuntimeConfig(threads=3).worker_count() == 3
