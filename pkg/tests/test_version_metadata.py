import importlib
import importlib.metadata


def test_version_matches_package_metadata():
    import stepstress

    assert stepstress.__version__ == importlib.metadata.version("stepstress-mdpde")


def test_version_fallback_when_metadata_missing(monkeypatch):
    import stepstress

    original_version = importlib.metadata.version

    def _patched_version(name: str) -> str:
        if name == "stepstress-mdpde":
            raise importlib.metadata.PackageNotFoundError
        return original_version(name)

    monkeypatch.setattr(importlib.metadata, "version", _patched_version)

    reloaded = importlib.reload(stepstress)
    try:
        assert reloaded.__version__ == "0.0.0+local"
        assert reloaded.__app_name__ == "stepstress"
    finally:
        monkeypatch.undo()
        importlib.reload(reloaded)
