"""Shared oracles for the test suite."""
import numpy as np


def central_difference(f, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Numerical gradient of scalar ``f`` at ``x`` (float64, modified in place and restored)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        up = f()
        x[idx] = orig - h
        down = f()
        x[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad


def rel_error(a, b, floor: float = 1e-8) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


# ---------------------------------------------------------------------------
# micro-config model fixtures
# ---------------------------------------------------------------------------

def micro_config(d_a: int = 0, **overrides):
    from stepsrl.model import ModelConfig
    values = dict(d_mfcc=3, d_w=3, hidden=4, d=6, d_e=6, vocab=7, d_a=d_a, sops=3)
    values.update(overrides)
    return ModelConfig(**values)


def random_batch(cfg, batch: int = 2, n: int = 5, m: int = 1, seed: int = 0, dtype=np.float64):
    """Random inputs with valid Y encodings (SOPS p SEP p ... EOPS PAD...) for a 7-token vocab."""
    from stepsrl.model import Batch
    rng = np.random.default_rng(seed)
    sops, sep, pad, eops = cfg.vocab - 4, cfg.vocab - 3, cfg.vocab - 2, cfg.vocab - 1
    phones = np.full((batch, cfg.k), pad, dtype=np.int64)
    for b in range(batch):
        seq = [sops]
        for j in range(int(rng.integers(1, 4))):
            seq += ([sep] if j else []) + [int(rng.integers(0, sops))]
        seq.append(eops)
        phones[b, :len(seq)] = seq
    return Batch(
        target=rng.standard_normal((batch, n, cfg.d_mfcc)).astype(dtype),
        left=rng.standard_normal((batch, m, n, cfg.d_mfcc)).astype(dtype),
        right=rng.standard_normal((batch, m, n, cfg.d_mfcc)).astype(dtype),
        text=rng.standard_normal((batch, 2 * m + 1, cfg.d_w)).astype(dtype),
        aux=np.eye(max(cfg.d_a, 1), dtype=dtype)[rng.integers(0, max(cfg.d_a, 1), batch)][:, :cfg.d_a],
        phones=phones,
    )


def model_gradient_errors(cfg, batch, l2: float = 0.01, h: float = 1e-3, seed: int = 0,
                          floor: float = 1e-6) -> dict:
    """Per-parameter max relative error of autodiff vs central differences (float64)."""
    from stepsrl import tensor as T
    from stepsrl.model import init_params
    from stepsrl.training import batch_loss

    with T.default_dtype(np.float64):
        params = init_params(cfg, np.random.default_rng(seed), dtype=np.float64)
        with T.Tape():
            T.backward(batch_loss(params, cfg, batch, l2))
        analytic = {k: p.grad.copy() for k, p in params.items()}
        errors = {}
        for name, p in params.items():
            def f():
                with T.no_grad():
                    return float(batch_loss(params, cfg, batch, l2).data)
            numeric = central_difference(f, p.data, h)
            errors[name] = float(rel_error(analytic[name], numeric, floor).max())
    return errors
