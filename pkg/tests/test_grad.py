import numpy as np
import pytest

from markovlens.constructions import (
    build_global,
    build_global_high_switch,
    build_unigram_point,
)
from markovlens.grad import (
    backward,
    empirical_loss,
    exact_population_loss,
    finite_diff_grad,
    loss_and_grad_batch,
    loss_and_grad_exact,
    loss_kl_decomposition,
    max_relative_error,
    numerical_hessian,
    per_sequence_losses,
)
from markovlens.markov import (
    MarkovKernel,
    entropy_rate,
    enumerate_all,
    marginal_entropy,
    mutual_info_gap,
    sample_batch,
)
from markovlens.model import ModelConfig, ParamSet, forward, init_params

from helpers import oracle_entropy_rate, oracle_marginal_entropy


def binary_config(tied=False, **kw):
    base = dict(embed_dim=4, attn_dim=4, ff_dim=16, context_len=8, n_layers=1,
                vocab_size=2, tied=tied, n_heads=1)
    base.update(kw)
    return ModelConfig(**base)


def test_constant_half_model_gives_ln2():
    params = ParamSet(binary_config(tied=True))  # all-zero weights -> f = 1/2
    batch = sample_batch(MarkovKernel.binary(0.3, 0.6), 16, 9, seed=0)
    assert empirical_loss(params, batch) == pytest.approx(np.log(2), abs=1e-12)


def test_empirical_loss_validation():
    params = ParamSet(binary_config())
    with pytest.raises(ValueError):
        empirical_loss(params, np.zeros((0, 9), dtype=int))
    with pytest.raises(ValueError):
        empirical_loss(params, np.zeros((3, 1), dtype=int))


def test_global_point_monte_carlo_loss():
    kernel = MarkovKernel.binary(0.5, 0.8)
    cfg = binary_config(tied=True, context_len=64)
    point = build_global_high_switch(0.5, 0.8, cfg)
    batch = sample_batch(kernel, 4096, 65, seed=5)
    assert empirical_loss(point, batch) == pytest.approx(entropy_rate(kernel), abs=0.01)


def test_unigram_point_monte_carlo_loss():
    kernel = MarkovKernel.binary(0.5, 0.8)
    cfg = binary_config(tied=True, context_len=64)
    point = build_unigram_point(0.5, 0.8, cfg)
    batch = sample_batch(kernel, 4096, 65, seed=6)
    assert empirical_loss(point, batch) == pytest.approx(marginal_entropy(kernel), abs=0.01)


def test_exact_loss_at_constructed_points():
    kernel = MarkovKernel.binary(0.2, 0.3)
    point = build_global(0.2, 0.3, binary_config(tied=True))
    assert exact_population_loss(point, kernel, 8) == pytest.approx(
        oracle_entropy_rate(0.2, 0.3), abs=1e-9
    )
    kernel = MarkovKernel.binary(0.5, 0.8)
    point = build_unigram_point(0.5, 0.8, binary_config(tied=True))
    assert exact_population_loss(point, kernel, 8) == pytest.approx(
        oracle_marginal_entropy(0.5, 0.8), abs=1e-9
    )


def test_exact_loss_dominates_entropy_rate():
    kernel = MarkovKernel.binary(0.35, 0.75)
    for seed in range(5):
        params = init_params(binary_config(tied=bool(seed % 2)), seed=seed)
        loss = exact_population_loss(params, kernel, 8)
        assert loss >= entropy_rate(kernel) - 1e-12


def test_kl_decomposition():
    kernel = MarkovKernel.binary(0.5, 0.8)
    cfg = binary_config(tied=True)
    # bigram point: KL term vanishes
    point = build_global_high_switch(0.5, 0.8, cfg)
    avg_kl, rate = loss_kl_decomposition(point, kernel, 8)
    assert rate == pytest.approx(entropy_rate(kernel), abs=1e-15)
    assert abs(avg_kl) <= 1e-10
    # unigram point: KL term equals the mutual information
    point = build_unigram_point(0.5, 0.8, cfg)
    avg_kl, rate = loss_kl_decomposition(point, kernel, 8)
    assert avg_kl == pytest.approx(mutual_info_gap(kernel), abs=1e-9)
    # independent chain: unigram equals bigram
    kernel = MarkovKernel.binary(0.5, 0.5)
    point = build_unigram_point(0.5, 0.5, cfg)
    avg_kl, _ = loss_kl_decomposition(point, kernel, 8)
    assert abs(avg_kl) <= 1e-10


def test_kl_decomposition_sums_to_loss():
    kernel = MarkovKernel.binary(0.45, 0.25)
    for seed in range(4):
        params = init_params(binary_config(tied=bool(seed % 2)), seed=100 + seed)
        avg_kl, rate = loss_kl_decomposition(params, kernel, 6)
        loss = exact_population_loss(params, kernel, 6)
        assert avg_kl + rate == pytest.approx(loss, abs=1e-10)


def test_stationarity_of_constructed_points():
    kernel = MarkovKernel.binary(0.5, 0.8)
    cfg = binary_config(tied=True)
    for point in (
        build_global_high_switch(0.5, 0.8, cfg),
        build_unigram_point(0.5, 0.8, cfg),
    ):
        grad = backward(point, kernel=kernel, horizon=8)
        assert np.abs(grad).max() <= 1e-8


GRAD_CHECK_CONFIGS = [
    dict(embed_dim=3, attn_dim=3, ff_dim=5, context_len=5, n_layers=1, vocab_size=2, tied=False),
    dict(embed_dim=3, attn_dim=3, ff_dim=5, context_len=5, n_layers=1, vocab_size=2, tied=True),
    dict(embed_dim=4, attn_dim=4, ff_dim=6, context_len=4, n_layers=2, vocab_size=2, tied=True,
         n_heads=2),
    dict(embed_dim=3, attn_dim=3, ff_dim=4, context_len=4, n_layers=1, vocab_size=4, tied=False),
    dict(embed_dim=3, attn_dim=3, ff_dim=4, context_len=4, n_layers=2, vocab_size=3, tied=True),
]


@pytest.mark.parametrize("spec", GRAD_CHECK_CONFIGS)
def test_backprop_matches_finite_differences_exact_mode(spec):
    cfg = ModelConfig(**spec)
    if cfg.vocab_size == 2:
        kernel = MarkovKernel.binary(0.35, 0.55)
    else:
        kernel = MarkovKernel.symmetric(0.6, cfg.vocab_size)
    params = init_params(cfg, seed=cfg.n_layers * 17 + cfg.vocab_size)
    params.flat[...] *= 20.0  # move away from the tiny-init regime
    _, grad = loss_and_grad_exact(params, kernel, cfg.context_len)
    fd = finite_diff_grad(
        lambda x: exact_population_loss(params.with_flat(x), kernel, cfg.context_len),
        params.flatten(),
    )
    assert max_relative_error(grad, fd) <= 1e-5


def test_backprop_matches_finite_differences_batch_mode():
    cfg = binary_config(tied=True, context_len=6)
    kernel = MarkovKernel.binary(0.25, 0.7)
    params = init_params(cfg, seed=7)
    params.flat[...] *= 10.0
    batch = sample_batch(kernel, 5, 7, seed=3)
    _, grad = loss_and_grad_batch(params, batch)
    fd = finite_diff_grad(
        lambda x: empirical_loss(params.with_flat(x), batch), params.flatten()
    )
    assert max_relative_error(grad, fd) <= 1e-5


def test_tying_consistency():
    """Tied embedding gradient = untied embedding gradient + untied head
    gradient, evaluated at head = embedding."""
    tied_cfg = binary_config(tied=True, context_len=6)
    untied_cfg = binary_config(tied=False, context_len=6)
    kernel = MarkovKernel.binary(0.4, 0.8)
    tied = init_params(tied_cfg, seed=21)
    untied = ParamSet(untied_cfg)
    ts, us = tied.slices(), untied.slices()
    for name in ts:
        untied.flat[us[name]] = tied.flat[ts[name]]
    untied.head[...] = tied.emb
    g_tied = backward(tied, kernel=kernel, horizon=6)
    g_untied = backward(untied, kernel=kernel, horizon=6)
    lhs = g_tied[ts["emb"]]
    rhs = g_untied[us["emb"]] + g_untied[us["head"]]
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)
    # every shared coordinate agrees as well
    for name in ts:
        if name == "emb":
            continue
        np.testing.assert_allclose(g_tied[ts[name]], g_untied[us[name]], atol=1e-10)


def test_head_gradient_matches_explicit_formula():
    """d/d(a, b) of the exact loss equals -(1/N) sum_n E[(P(1|x_n) - f_n) z_n]
    (resp. the same without z_n), computed from the forward trace alone."""
    cfg = binary_config(tied=False, context_len=6)
    kernel = MarkovKernel.binary(0.3, 0.45)
    params = init_params(cfg, seed=5)
    params.flat[...] *= 15.0
    horizon = 6
    tokens, weights = enumerate_all(kernel, horizon)
    trace = forward(params, tokens)
    cond1 = kernel.matrix[tokens][:, :, 1]
    resid = cond1 - trace.preds  # (K, N)
    z = trace.layers[-1].z
    grad_a = -np.einsum("k,kn,knd->d", weights, resid, z) / horizon
    grad_b = -float(weights @ resid.mean(axis=1))
    g = backward(params, kernel=kernel, horizon=horizon)
    s = params.slices()
    np.testing.assert_allclose(g[s["head"]], grad_a, atol=1e-10)
    assert g[s["bias"]][0] == pytest.approx(grad_b, abs=1e-10)


def test_exact_matches_monte_carlo_within_error_bars():
    cfg = binary_config(tied=True, context_len=8)
    kernel = MarkovKernel.binary(0.55, 0.35)
    params = init_params(cfg, seed=13)
    exact = exact_population_loss(params, kernel, 8)
    batch = sample_batch(kernel, 8192, 9, seed=17)
    losses = per_sequence_losses(params, batch)
    mc = float(losses.mean())
    stderr = float(losses.std(ddof=1)) / np.sqrt(len(losses))
    assert abs(exact - mc) <= 4.0 * stderr


def test_numerical_hessian_small_case():
    cfg = ModelConfig(embed_dim=2, attn_dim=2, ff_dim=3, context_len=4,
                      n_layers=1, vocab_size=2, tied=True)
    kernel = MarkovKernel.binary(0.6, 0.7)
    point = build_unigram_point(0.6, 0.7, cfg)
    report = numerical_hessian(point, kernel, 4)
    assert report.asymmetry <= 1e-6
    np.testing.assert_allclose(report.matrix, report.matrix.T, atol=1e-15)
    assert report.eigenvalues[0] <= report.eigenvalues[-1]
    assert report.min_eigenvalue >= -1e-6  # tied unigram point is a minimum
    idx = report.alpha_indices()
    assert len(idx) == 1 + cfg.embed_dim


def test_numerical_hessian_dimension_guard():
    cfg = binary_config(context_len=100)  # flat dimension 601 > 512
    params = init_params(cfg, seed=1)
    with pytest.raises(ValueError):
        numerical_hessian(params, MarkovKernel.binary(0.5, 0.8), 4)


def test_backward_requires_arguments():
    params = init_params(binary_config(), seed=0)
    with pytest.raises(ValueError):
        backward(params)


def test_untied_unigram_hessian_is_indefinite():
    """Full numerical Hessian at the untied constant-prediction point: the
    spectrum dips below -1e-4 and its head block matches the analytic
    (bias, head, emb) matrix."""
    from markovlens.landscape import analytic_alpha_hessian

    cfg = binary_config(tied=False)
    kernel = MarkovKernel.binary(0.5, 0.8)
    point = build_unigram_point(0.5, 0.8, cfg)
    report = numerical_hessian(point, kernel, 8)
    assert report.min_eigenvalue <= -1e-4
    analytic = analytic_alpha_hessian(point.pos, 0.5, 0.8, tied=False)
    np.testing.assert_allclose(report.alpha_block(), analytic.matrix, atol=1e-5)
    assert report.max_off_block() <= 1e-5
