import pytest

from qpmdesign.dispersion import InteractionConfig, load_model


@pytest.fixture(scope="session")
def model():
    return load_model()


@pytest.fixture(scope="session")
def cfg1550():
    return InteractionConfig.for_degenerate(1550.0)


@pytest.fixture(scope="session")
def cfg1310():
    return InteractionConfig.for_degenerate(1310.0)


class DesignRuns:
    """Full design runs shared by the CLI and acceptance modules, one per wavelength."""

    def __init__(self, root):
        self.root = root
        self._runs = {}

    def get(self, wavelength_nm, tag="a"):
        import time

        from qpmdesign.design import DesignRequest, design

        key = (wavelength_nm, tag)
        if key not in self._runs:
            out = self.root / f"design_{wavelength_nm:g}_{tag}"
            t = time.perf_counter()
            report, profile = design(DesignRequest(wavelength_nm), out_dir=out)
            self._runs[key] = (report, profile, out, time.perf_counter() - t)
        return self._runs[key]


@pytest.fixture(scope="session")
def design_runs(tmp_path_factory):
    return DesignRuns(tmp_path_factory.mktemp("designs"))
