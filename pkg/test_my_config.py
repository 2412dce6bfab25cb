import importlib
import os

import my_config


def test_environment_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv("RGO_WORKERS", "3")
    monkeypatch.setenv("RGO_WORKSPACE_DIR", str(tmp_path))
    monkeypatch.setenv("RGO_SUITE_DRAWS", "500")
    try:
        reloaded = importlib.reload(my_config).MY_CONFIG
        assert reloaded.NUM_WORKERS == 3
        assert reloaded.SAMPLES_DIR == os.path.join(str(tmp_path), "samples")
        assert reloaded.SUITE_DRAWS == 500
    finally:
        monkeypatch.undo()
        importlib.reload(my_config)


def test_defaults_are_sane():
    cfg = my_config.MY_CONFIG
    assert cfg.ACCEPT_CONSTANT == 4.0
    assert 0 < cfg.ALPHA <= cfg.FAMILY_ALPHA < 1
    assert cfg.QUADRATURE_NODES % 2 == 1
