"""Shared test utilities: finite-difference gradient checking."""

import numpy as np


def numeric_grad(f, x, h=1e-3):
    """Central-difference gradient of scalar f at x, probing every element."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(analytic, numeric, floor=1e-3):
    """Worst-case |a - n| / max(|a|, |n|, floor) over all elements."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


def param_gradcheck(build_loss, params, n_samples=6, h=1e-4, tol=1e-3, seed=0):
    """Check d(loss)/d(param) for sampled parameter elements.

    `build_loss()` runs the forward pass against the current parameter
    values and returns a scalar engine tensor. Parameters should already be
    float64 for a meaningful comparison.
    """
    from uwenhance import engine as eng

    rng = np.random.default_rng(seed)
    eng.zero_grads(params)
    build_loss().backward()
    worst = 0.0
    for p in params:
        flat = p.t.data.reshape(-1)
        gflat = p.t.grad.reshape(-1)
        idxs = rng.choice(flat.size, size=min(n_samples, flat.size), replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(build_loss().data)
            flat[i] = orig - h
            fm = float(build_loss().data)
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            err = max_rel_err(gflat[i], num)
            worst = max(worst, err)
            assert err < tol, (
                f"{p.name}[{i}]: analytic {gflat[i]:.6e} vs numeric {num:.6e}"
                f" (rel err {err:.2e})")
    eng.zero_grads(params)
    return worst


def gradcheck(build, args, h=1e-3, tol=1e-3):
    """Check analytic grads of a scalar-valued graph against finite differences.

    `build(*tensors) -> scalar Tensor` constructs the graph from engine
    tensors; `args` are the float64 numpy leaves to differentiate against.
    Returns the worst relative error across all leaves.
    """
    from uwenhance import engine as eng

    leaves = [eng.as_tensor(a.astype(np.float64), requires_grad=True) for a in args]
    loss = build(*leaves)
    loss.backward()
    worst = 0.0
    for i, leaf in enumerate(leaves):
        def f(xv, i=i):
            probe = [eng.as_tensor(a.data) for a in leaves]
            probe[i] = eng.as_tensor(xv)
            return float(build(*probe).data)

        num = numeric_grad(f, leaves[i].data, h=h)
        err = max_rel_err(leaf.grad, num)
        worst = max(worst, err)
        assert err < tol, f"leaf {i}: rel err {err:.2e} >= {tol}"
    return worst
