"""Python bindings for the ntpboost library. Arguments and results are plain dicts."""

import json

from . import _core

NtpError = _core.NtpError


def _s(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def kl(p, q):
    return _core.kl(_s(p), _s(q))


def tv(p, q):
    return _core.tv(_s(p), _s(q))


def entropy(p):
    return _core.entropy(_s(p))


def next_token_loss(p, lm):
    return _core.next_token_loss(_s(p), _s(lm))


def boost(p, q, d):
    return json.loads(_core.boost(_s(p), _s(q), _s(d)))


def construct(lm, d, alpha, offset, complemented=False):
    return json.loads(_core.construct(_s(lm), _s(d), alpha, offset, complemented))


def simulate_prefixes(graph, alphabet, n):
    return json.loads(_core.simulate_prefixes(_s(graph), alphabet, n))


def verify(seed=1, quick=True):
    return json.loads(_core.verify(seed, quick))


def quantize(x, integer, fraction):
    return _core.quantize(x, integer, fraction)
