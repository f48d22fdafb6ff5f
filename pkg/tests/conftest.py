import time

import numpy as np
import pytest

from valleon.device import preset_device
from valleon.lattice import default_preset
from valleon.transport import (
    TRANSPORT_ENVELOPE,
    _outgoing_probe,
    default_steps,
    make_edge_wavepacket,
    propagate,
    run_transport,
)


TIMINGS = {}  # fixture name -> wall seconds, read by the acceptance runtime checks


def _timed(name, fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    TIMINGS[name] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def timings():
    return TIMINGS


@pytest.fixture(scope="session")
def spec():
    return default_preset(+1)


@pytest.fixture(scope="session")
def hsbs():
    return _timed("hsbs", preset_device, "hsbs")


@pytest.fixture(scope="session")
def hsbs_probes(hsbs):
    return {out: _outgoing_probe(hsbs, out, +1, 0.0) for out in ("c", "d")}


@pytest.fixture(scope="session")
def hsbs_run_a(hsbs, hsbs_probes):
    return _timed("hsbs_run_a", run_transport, hsbs, "a", +1, 0.0, TRANSPORT_ENVELOPE, probes=hsbs_probes)


@pytest.fixture(scope="session")
def hsbs_run_b(hsbs, hsbs_probes):
    return run_transport(hsbs, "b", +1, 0.0, TRANSPORT_ENVELOPE, probes=hsbs_probes)


@pytest.fixture(scope="session")
def hsbs_run_mirror(hsbs, hsbs_run_a):
    """Input a with the c <-> d site permutation applied to the initial packet."""
    def rerun():
        pk = make_edge_wavepacket(hsbs, "a", +1, 0.0, TRANSPORT_ENVELOPE)
        perm = hsbs.mirror_permutation()
        psi = np.empty_like(pk.psi)
        psi[perm] = pk.psi
        n = default_steps(hsbs, pk, hsbs_run_a.dt)
        return propagate(hsbs, psi, hsbs_run_a.dt, n, stop_residual=1e-4)

    return _timed("hsbs_run_mirror", rerun)


@pytest.fixture(scope="session")
def bend_runs():
    out = {}
    for geom in ("straight", "z", "omega"):
        dev = preset_device(geom)
        out[geom] = _timed(f"bend_{geom}", run_transport, dev, "in", +1, 0.0, TRANSPORT_ENVELOPE)
    return out


@pytest.fixture(scope="session")
def hsbs_broadband(hsbs):
    """Input a at carriers spanning the middle 60% of the gap."""
    e = 0.6 * abs(hsbs.spec.delta)
    return {E: run_transport(hsbs, "a", +1, E, TRANSPORT_ENVELOPE) for E in (-e, e)}
