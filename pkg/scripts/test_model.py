"""
Architecture invariants of SCANet and the residual baseline.
"""

import numpy as np
import pytest

from scanet import ops
from scanet.base import Tensor
from scanet.config import ModelConfig, expand_preset
from scanet.errors import ConfigError, DimensionError, VerificationError
from scanet.model import (
    AttentionRecord, aggregate, build_model, card_path_for, load_model, neighborhood_partition, partition_slices,
    predict_label, predict_proba, predict_study, save_model,
)
from scanet.nn import BranchNet, CrossAttentionTransformer, MultiHeadSelfAttention, TransformerEncoderLayer
from scanet.settings import precision


def _volumes(config: ModelConfig, n: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(n,) + config.volume_shape).astype(np.float32)


@pytest.mark.parametrize("num_slices,k,expected", [
    (5, 2, [[0, 1], [2, 3], [4, 4]]),
    (4, 2, [[0, 1], [2, 3]]),
    (3, 1, [[0], [1], [2]]),
    (3, 3, [[0, 1, 2]]),
    (7, 3, [[0, 1, 2], [3, 4, 5], [6, 6, 6]]),
])
def test_neighborhood_partition_examples(num_slices, k, expected):
    assert neighborhood_partition(num_slices, k) == expected


def test_full_size_partition_has_thirteen_branches():
    groups = neighborhood_partition(26, 2)
    assert len(groups) == 13 and groups[-1] == [24, 25]
    assert ModelConfig().num_branches == 13


@pytest.mark.parametrize("k", [0, 6])
def test_neighborhood_partition_rejects_bad_sizes(k):
    with pytest.raises(ConfigError):
        neighborhood_partition(5, k)


def test_partition_slices_gathers_padding_slice():
    tokens = Tensor(np.arange(5, dtype=np.float32).reshape(1, 5, 1))
    grouped = partition_slices(tokens, 2, axis=1)
    np.testing.assert_array_equal(grouped.data.reshape(-1), [0, 1, 2, 3, 4, 4])


def test_aggregate_with_identical_branches_equals_single_softmax(rng):
    z = rng.standard_normal(2)
    logits = Tensor(np.tile(z, (3, 4, 1)))
    weights = Tensor(rng.standard_normal(4))
    with precision(np.float64):
        fused = aggregate(Tensor(logits.data.astype(np.float64)), Tensor(weights.data.astype(np.float64))).data
    expected = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    np.testing.assert_allclose(fused, np.tile(expected, (3, 1)), atol=1e-6)


def test_aggregate_with_zero_weights_averages_logits(rng):
    logits = rng.standard_normal((2, 3, 2))
    with precision(np.float64):
        fused = aggregate(Tensor(logits), Tensor(np.zeros(3))).data
    mean = logits.mean(axis=1)
    expected = np.exp(mean) / np.exp(mean).sum(axis=-1, keepdims=True)
    np.testing.assert_allclose(fused, expected, atol=1e-12)
    with pytest.raises(DimensionError):
        aggregate(Tensor(logits), Tensor(np.zeros(4)))


def test_predict_label_ties_go_to_class_zero():
    assert predict_label(np.array([0.5, 0.5])) == 0
    assert predict_label(np.array([0.4, 0.6])) == 1
    np.testing.assert_array_equal(predict_label(np.array([[0.7, 0.3], [0.5, 0.5], [0.1, 0.9]])), [0, 0, 1])


def test_forward_shapes_and_attention_rows(tiny_config):
    model = build_model(tiny_config, seed=0)
    probabilities, records = model(_volumes(tiny_config, 3))
    assert probabilities.shape == (3, 2)
    np.testing.assert_allclose(probabilities.data.sum(axis=-1), 1.0, atol=1e-6)
    c = tiny_config
    assert len(records) == 3
    for record in records:
        assert record.sat_maps.shape == (c.num_slices, c.sat_num_layers, c.sat_num_heads, c.num_tokens, c.num_tokens)
        assert record.cat_maps.shape == (c.num_branches, c.neighborhood_size)
        assert record.max_row_error() <= 1e-5
        record.validate()
        assert record.spatial_saliency(c.token_grid).shape == (c.num_slices,) + tuple(c.token_grid)


def test_record_validation_flags_broken_rows():
    record = AttentionRecord(sat_maps=np.full((1, 1, 1, 2, 2), 0.6), cat_maps=np.full((1, 2), 0.5))
    with pytest.raises(VerificationError):
        record.validate()
    assert AttentionRecord().is_empty


def test_model_rejects_wrong_volume_shape(tiny_config):
    model = build_model(tiny_config, seed=0)
    with pytest.raises(ConfigError):
        model(np.zeros((1, tiny_config.num_slices + 1, 2, 16, 16), dtype=np.float32))


def test_config_validation_catches_grid_mismatch(tiny_config):
    from dataclasses import replace
    with pytest.raises(ConfigError, match="grid"):
        replace(tiny_config, token_grid=(5, 5)).validate()
    with pytest.raises(ConfigError, match="neighborhood_size"):
        replace(tiny_config, neighborhood_size=9).validate()


def test_build_is_deterministic_in_the_seed(tiny_config):
    a, b, c = build_model(tiny_config, 7), build_model(tiny_config, 7), build_model(tiny_config, 8)
    for (name, pa), (_, pb), (_, pc) in zip(a.named_parameters(), b.named_parameters(), c.named_parameters()):
        np.testing.assert_array_equal(pa.data, pb.data, err_msg=name)
    assert any(not np.array_equal(pa.data, pc.data) for pa, pc in zip(a.parameters(), c.parameters()))


def test_identity_encoder_layer_when_residual_paths_are_zeroed(rng):
    with precision(np.float64):
        layer = TransformerEncoderLayer(8, 2, 2, rng)
        for linear in (layer.attention.value, layer.attention.output, layer.mlp.fc_out):
            linear.weight.data[...] = 0.0
            linear.bias.data[...] = 0.0
        x = rng.standard_normal((2, 5, 8))
        out, maps = layer(Tensor(x))
    np.testing.assert_allclose(out.data, x, atol=1e-12)
    np.testing.assert_allclose(maps.sum(axis=-1), 1.0, atol=1e-12)


def test_cross_attention_is_uniform_over_identical_slices(rng):
    with precision(np.float64):
        cat = CrossAttentionTransformer(8, 3, 2, rng)
        one_slice = rng.standard_normal((1, 3, 1, 8))
        _, alpha = cat(Tensor(np.repeat(one_slice, 4, axis=2)))
        _, alpha_single = cat(Tensor(one_slice))
    np.testing.assert_allclose(alpha, 0.25, atol=1e-12)
    np.testing.assert_allclose(alpha_single, 1.0, atol=1e-12)


def test_cross_attention_is_invariant_to_slice_order(rng):
    with precision(np.float64):
        cat = CrossAttentionTransformer(8, 2, 2, rng)
        slices = rng.standard_normal((2, 2, 3, 8))
        out, alpha = cat(Tensor(slices))
        out_perm, alpha_perm = cat(Tensor(slices[:, :, [2, 0, 1]]))
    np.testing.assert_allclose(out_perm.data, out.data, atol=1e-10)
    np.testing.assert_allclose(alpha_perm, alpha[..., [2, 0, 1]], atol=1e-12)


def _softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def test_single_head_self_attention_matches_direct_formula(rng):
    with precision(np.float64):
        attention = MultiHeadSelfAttention(8, 1, rng)
        x = rng.standard_normal((1, 4, 8))
        out, maps = attention(Tensor(x))

    def linear(layer, value):
        return value @ layer.weight.data + layer.bias.data

    tokens = x[0]
    q, k, v = linear(attention.query, tokens), linear(attention.key, tokens), linear(attention.value, tokens)
    expected_maps = np.zeros((4, 4))
    context = np.zeros((4, 8))
    for i in range(4):
        scores = np.array([q[i] @ k[j] for j in range(4)]) / np.sqrt(8.0)
        expected_maps[i] = _softmax(scores)
        context[i] = sum(expected_maps[i, j] * v[j] for j in range(4))
    assert maps.shape == (1, 1, 4, 4)
    np.testing.assert_allclose(maps[0, 0], expected_maps, atol=1e-5)
    np.testing.assert_allclose(out.data[0], linear(attention.output, context), atol=1e-5)


def test_cross_attention_matches_direct_formula(rng):
    with precision(np.float64):
        cat = CrossAttentionTransformer(8, 1, 2, rng)
        cat.query.data[...] = rng.standard_normal((1, 8))
        slices = rng.standard_normal((1, 3, 8))
        out, alpha = cat(Tensor(slices))

    def linear(layer, value):
        return value @ layer.weight.data + layer.bias.data

    keys, values = linear(cat.key, slices[0]), linear(cat.value, slices[0])
    expected_alpha = _softmax(keys @ cat.query.data[0] / np.sqrt(8.0))
    context = expected_alpha @ values
    normed = (context - context.mean()) / np.sqrt(context.var() + 1e-5) * cat.norm.gain.data + cat.norm.bias.data
    hidden = np.maximum(linear(cat.mlp.fc_in, normed), 0.0)
    expected = context + linear(cat.mlp.fc_out, hidden)
    np.testing.assert_allclose(alpha, expected_alpha[None], atol=1e-5)
    np.testing.assert_allclose(out.data, expected[None], atol=1e-5)


def test_aggregate_ignores_a_shift_of_every_branch_weight(rng):
    logits = Tensor(rng.standard_normal((3, 4, 2)).astype(np.float32))
    weights = rng.standard_normal(4).astype(np.float32)
    fused = aggregate(logits, Tensor(weights)).data
    shifted = aggregate(logits, Tensor(weights + np.float32(3.7))).data
    np.testing.assert_allclose(shifted, fused, atol=1e-6)


def test_branch_gives_identical_embeddings_to_identical_groups(tiny_config):
    c = tiny_config
    k = c.neighborhood_size
    with precision(np.float64):
        model = build_model(c, seed=3)
        group = np.random.default_rng(6).standard_normal((k, c.num_tokens, c.sat_embed_dim))
        other = np.random.default_rng(7).standard_normal((k, c.num_tokens, c.sat_embed_dim))
        embeddings = model.branch_forward(Tensor(np.concatenate([group, other, group]))).data
    assert embeddings.shape == (3 * k, model.branch.embedding_dim)
    np.testing.assert_allclose(embeddings[:k], embeddings[2 * k:], rtol=0, atol=1e-12)
    assert not np.allclose(embeddings[:k], embeddings[k:2 * k])


def test_zero_init_residual_branch_passes_the_skip_through(rng):
    with precision(np.float64):
        branch = BranchNet(4, (4, 4), (1, 1), (1, 1), lambda c: 2, rng, zero_init_residual=True)
        assert all(block.norm2.gain.data.max() == 0.0 for stage in branch.stages for block in stage)
        zeros = branch(Tensor(np.zeros((2, 4, 5, 5)))).data
        x = rng.uniform(size=(2, 4, 5, 5))
        pooled = branch(Tensor(x)).data
    np.testing.assert_array_equal(zeros, 0.0)
    np.testing.assert_allclose(pooled, x.mean(axis=(2, 3)), atol=1e-12)


def test_global_conv_and_spatial_attention_are_slice_equivariant(tiny_config):
    with precision(np.float64):
        model = build_model(tiny_config, seed=2)
        slices = np.random.default_rng(4).uniform(size=tiny_config.volume_shape)
        permutation = [2, 0, 3, 1]
        tokens, _ = model.sat_forward(model.global_conv_block(slices))
        tokens_perm, _ = model.sat_forward(model.global_conv_block(slices[permutation]))
    np.testing.assert_allclose(tokens_perm.data, tokens.data[permutation], atol=1e-10)


def test_shared_branch_gradient_equals_sum_over_clones(rng):
    def make_branch():
        return BranchNet(8, (8, 8), (1, 1), (1, 2), lambda c: min(4, c), np.random.default_rng(5))

    with precision(np.float64):
        shared, clone_a, clone_b = make_branch(), make_branch(), make_branch()
        x = rng.standard_normal((2, 8, 4, 4))
        weights = Tensor(rng.standard_normal((2, 8)))
        ops.sum(ops.mul(shared(Tensor(x)), weights)).backward()
        loss_a = ops.sum(ops.mul(clone_a(Tensor(x[:1])), Tensor(weights.data[:1])))
        loss_b = ops.sum(ops.mul(clone_b(Tensor(x[1:])), Tensor(weights.data[1:])))
        ops.add(loss_a, loss_b).backward()
    for (name, p), pa, pb in zip(shared.named_parameters(), clone_a.parameters(), clone_b.parameters()):
        np.testing.assert_allclose(p.grad, pa.grad + pb.grad, rtol=1e-5, atol=1e-10, err_msg=name)


def test_scanet_uses_one_branch_for_every_neighborhood(tiny_config):
    model = build_model(tiny_config, seed=0)
    names = [name for name, _ in model.named_parameters()]
    assert model.branch_weights.shape == (tiny_config.num_branches,)
    first_block = [name for name in names if name.startswith("branch.stages.0.0.conv1")]
    assert first_block == ["branch.stages.0.0.conv1.weight"]


def test_baseline_has_no_attention_parameters(tiny_config):
    from dataclasses import replace
    scanet = build_model(tiny_config, seed=0)
    baseline = build_model(replace(tiny_config, variant="resnet"), seed=0)
    names = [name for name, _ in baseline.named_parameters()]
    assert not any(name.startswith(("sat.", "cat.", "branch_weights")) for name in names)
    attention_only = scanet.sat.num_parameters() + scanet.cat.num_parameters() + tiny_config.num_branches
    # tiny config: the SAT width equals the global conv width, so both branches are the same size
    assert scanet.num_parameters() - baseline.num_parameters() == attention_only
    probabilities, records = baseline(_volumes(tiny_config, 2))
    np.testing.assert_allclose(probabilities.data.sum(axis=-1), 1.0, atol=1e-6)
    assert all(record.is_empty for record in records)


def test_predict_helpers_agree_with_the_batched_forward(tiny_config):
    model = build_model(tiny_config, seed=1)
    volumes = _volumes(tiny_config, 3, seed=9)
    batched = predict_proba(model, volumes, batch_size=2)
    single, record = predict_study(model, volumes[1])
    np.testing.assert_allclose(batched[1], single, atol=1e-6)
    assert model.training
    record.validate()


def test_checkpoint_and_card_round_trip(tiny_config, tmp_path):
    _, train_config = expand_preset("tiny")
    model = build_model(tiny_config, seed=3)
    card = save_model(model, tmp_path / "model.sckp", train_config)
    assert card == card_path_for(tmp_path / "model.sckp")
    assert f"# parameters: {model.num_parameters()}" in card.read_text()
    restored = load_model(tmp_path / "model.sckp")
    assert restored.config == model.config
    for (name, a), (name_b, b) in zip(model.named_parameters(), restored.named_parameters()):
        assert name == name_b
        np.testing.assert_array_equal(a.data, b.data)
        assert a.data.tobytes() == b.data.tobytes()


def test_load_model_without_card_is_a_config_error(tiny_config, tmp_path):
    model = build_model(tiny_config, seed=3)
    save_model(model, tmp_path / "model.sckp")
    card_path_for(tmp_path / "model.sckp").unlink()
    with pytest.raises(ConfigError):
        load_model(tmp_path / "model.sckp")


@pytest.mark.slow
def test_full_size_forward_backward_step():
    config, _ = expand_preset("paper-scale")
    model = build_model(config, seed=0)
    probabilities, records = model(_volumes(config, 2))
    np.testing.assert_allclose(probabilities.data.sum(axis=-1), 1.0, atol=1e-6)
    ops.cross_entropy(probabilities, [0, 1]).backward()
    for name, param in model.named_parameters():
        assert param.grad is not None and np.all(np.isfinite(param.grad)), name
    assert records[0].sat_maps.shape == (26, 2, 4, 196, 196)
