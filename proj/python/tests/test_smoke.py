import numpy as np
import pytest

vitc = pytest.importorskip("vitc")


def tiny_config():
    c = vitc.ModelConfig()
    c.image_h = c.image_w = 8
    c.patch_size = 4
    c.embed_dim = 16
    c.mlp_dim = 32
    c.num_layers = 2
    c.num_heads = 4
    c.num_classes = 5
    c.dropout = 0.0
    return c


def tiny_data(n, seed):
    return vitc.make_synthetic(n, classes=5, seed=seed, height=8, width=8, channels=3)


def test_reference_counts_and_algebra():
    base = vitc.reference_config(4, 512, 1024, 6)
    assert abs(vitc.config_param_count(base) / 13.2e6 - 1) <= 0.03
    assert abs(vitc.lra_param_count(base, "dxk", 128) / 10e6 - 1) <= 0.02
    assert abs(vitc.lra_param_count(base, "kxk", 128) / 8e6 - 1) <= 0.02
    assert round(vitc.compression_percent(13.2e6, 6.6e6)) == 50
    assert vitc.relative_error_increase(72.26, 66.57) == pytest.approx(20.5, abs=0.05)


def test_train_prune_and_round_trip(tmp_path):
    model = vitc.VitModel.create(tiny_config(), seed=1)
    model.attach_masks("full")
    assert model.has_masks
    x, y = tiny_data(64, 2)
    tx, ty = tiny_data(32, 3)
    log = vitc.train(model, x, y, tx, ty, epochs=2, batch_size=16, seed=4)
    assert [e["epoch"] for e in log] == [0, 1]
    assert log[-1]["test_acc"] is not None

    pruned = model.prune(0.3)
    assert pruned.param_count < model.param_count
    assert not pruned.has_masks

    path = tmp_path / "pruned.vtck"
    pruned.save(path)
    back = vitc.VitModel.load(path)
    np.testing.assert_array_equal(back.predict(tx), pruned.predict(tx))
    assert back.evaluate(tx, ty) == pruned.evaluate(tx, ty)


def test_predict_shape_and_masks():
    model = vitc.VitModel.create(tiny_config(), seed=5)
    x, _ = tiny_data(7, 6)
    assert model.predict(x).shape == (7, 5)
    model.attach_masks("ffn")
    masks = model.mask_values()
    assert len(masks) == 2
    assert all(site == "ffn" and np.all(v == 1.0) for _, site, v in masks)


def test_lra_and_hybrid_models():
    c = tiny_config()
    dxk = vitc.VitModel.create_lra(c, "dxk", 8)
    kxk = vitc.VitModel.create_lra(c, "kxk", 8)
    assert kxk.param_count < dxk.param_count
    hybrid = vitc.VitModel.create_hybrid(c, "dxk", 8)
    assert hybrid.has_masks
    assert hybrid.prune(0.25).param_count < dxk.param_count
    # Untrained masks all tie at 1.0, so half the entries are taken from
    # block 0 first and wipe it out.
    with pytest.raises(vitc.VitcError) as info:
        hybrid.prune(0.5)
    assert info.value.code == "ALL_DIMS_PRUNED"


def test_errors_carry_codes(tmp_path):
    with pytest.raises(vitc.VitcError) as info:
        vitc.VitModel.load(tmp_path / "missing.vtck")
    assert info.value.code == "MISSING_FILE"
    model = vitc.VitModel.create(tiny_config(), seed=1)
    model.attach_masks("full")
    with pytest.raises(vitc.VitcError) as info:
        model.prune(1.5)
    assert info.value.code == "INVALID_RATE"
