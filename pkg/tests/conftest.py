import pytest

from calib.model import ExperimentConfig


def ideal_config(eta1=0.5, W0=1e5, alpha=1.0, eta2=1.0, eps=1.0, pc=True):
    """No dead times, background or accidental windows worth mentioning.

    The driver keeps a 1 ns flat top (its dead time may not be shorter),
    centred on the fiber delay.
    """
    cfg = ExperimentConfig()
    delay = cfg.channel.fiber_delay
    return cfg.replace(
        source__pair_rate_W0=W0,
        channel__alpha_idler_transmittance=alpha,
        channel__epsilon_signal_transmittance=eps,
        d1__eta=eta1,
        d1__dead_time=0.0,
        d2__eta=eta2,
        d2__dead_time=0.0,
        pockels__enabled=pc,
        pockels__rise_time=0.0,
        pockels__electronic_delay=delay - 0.5e-9,
        pockels__flat_top=1e-9,
        pockels__driver_dead_time=1e-9,
        pockels__rate_limit=1e12,
    )


@pytest.fixture
def ideal():
    return ideal_config


_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and item.module.__name__.endswith("test_acceptance"):
        doc = (item.function.__doc__ or "").strip().splitlines()[0]
        _ACCEPTANCE.append((item.name, rep.outcome, doc))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, doc in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}: {doc}")
