import numpy as np
import pytest

from lili import codec, datagen, models, nn
from lili.datagen import DatasetConfig, build_dataset
from lili.errors import BadMagic, MissingCarrySplit, ShapeMismatch
from lili.models import (
    BaselineModel,
    DcmModel,
    TrainedNet,
    baseline_predict,
    dcm_predict,
    dcm_specs,
    mlp_baseline_spec,
)
from lili.nn import NetworkSpec, TrainConfig
from lili.oracle import RelationKind, make_record


def shape_for(kind, **kw):
    return DatasetConfig.make(kind, counts=(4, 2, 2), **kw).task_shape()


def zero_net(spec):
    params = [
        (np.zeros((o, i)), np.zeros(o))
        for i, o in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])
    ]
    return TrainedNet(spec, params)


def mul2_dataset(counts=(220, 60, 60), seed=77):
    cfg = DatasetConfig.make(
        RelationKind.MULTIPLICATION, operand_digits=2, counts=counts, seed=seed,
        include_carry_split=True,
    )
    return build_dataset(cfg)


class TestSpecs:
    def test_baseline_decimal7(self):
        spec = mlp_baseline_spec(shape_for(RelationKind.ADDITION))
        assert spec.layer_sizes == (1800, 256, 256, 256, 900)

    def test_baseline_binary14(self):
        spec = mlp_baseline_spec(shape_for(RelationKind.BITWISE_AND))
        assert spec.layer_sizes == (3600, 256, 256, 256, 1800)

    def test_baseline_parameter_count(self):
        spec = mlp_baseline_spec(shape_for(RelationKind.ADDITION))
        # independent tally over layer pairs
        sizes = spec.layer_sizes
        want = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            want += fan_out * fan_in + fan_out
        assert spec.parameter_count() == want == 823_940

    def test_dcm_layer_counts(self):
        carry, noncarry, synth = dcm_specs(shape_for(RelationKind.ADDITION))
        assert carry.layer_sizes == (1800, 256, 256, 256, 256, 256, 900)
        assert noncarry == carry
        assert synth.layer_sizes == (1800, 256, 256, 256, 900)
        assert carry.output_len == noncarry.output_len == synth.output_len == 900


class TestDcmTargets:
    def test_target_consistency(self):
        ds = mul2_dataset()
        shape = ds.config.task_shape()
        f = shape.output_field
        for r in ds.train[:20]:
            _, y, (yc, yd) = datagen.materialize(r, shape)
            c = codec.decode(yc.reshape(f.rows, f.width), f).value
            d = codec.decode(yd.reshape(f.rows, f.width), f).value
            e = codec.decode(y.reshape(f.rows, f.width), f).value
            assert c + d == e

    def test_fig_style_example_targets(self):
        cfg = DatasetConfig.make(
            RelationKind.MULTIPLICATION, counts=(4, 2, 2), include_carry_split=True
        )
        shape = cfg.task_shape()
        f = shape.output_field
        rec = make_record(cfg.to_relation(), 2490, 2644, include_carry_split=True)
        _, y, (yc, yd) = datagen.materialize(rec, shape)
        assert codec.decode(yc.reshape(f.rows, f.width), f).value == 2575300
        assert codec.decode(yd.reshape(f.rows, f.width), f).value == 4008260
        assert codec.decode(y.reshape(f.rows, f.width), f).value == 6583560

    def test_train_dcm_requires_carry_split(self):
        cfg = DatasetConfig.make(
            RelationKind.MULTIPLICATION, operand_digits=2, counts=(20, 8, 8), seed=3
        )
        ds = build_dataset(cfg)
        with pytest.raises(MissingCarrySplit):
            models.train_dcm(ds, models.default_dcm_config(max_epochs=1))

    def test_train_dcm_returns_three_curves(self):
        ds = mul2_dataset(counts=(30, 10, 10))
        _, curves = models.train_dcm(
            ds, models.default_dcm_config(1, max_epochs=3, patience=3)
        )
        assert set(curves) == {"carry", "noncarry", "synthetic"}
        for curve in curves.values():
            assert 0 <= curve.best_epoch < len(curve.val_loss)


class TestPredictPaths:
    def test_zero_init_dcm_is_graded_not_crashed(self):
        # zero nets output sigmoid(0) = 0.5 everywhere; binarize(>=0.5) gives
        # an all-ink image, which decodes to a wrong value, never crashes
        ds = mul2_dataset(counts=(8, 4, 4))
        shape = ds.config.task_shape()
        carry_s, noncarry_s, synth_s = dcm_specs(shape)
        model = DcmModel(
            zero_net(carry_s), zero_net(noncarry_s), zero_net(synth_s), shape
        )
        f = shape.output_field
        a_img = codec.normalize(codec.render(12, shape.input_field))
        b_img = codec.normalize(codec.render(34, shape.input_field))
        pred = dcm_predict(model, a_img, b_img)
        assert pred.shape == (f.rows, f.width)
        assert (pred == 1).all()
        decoded = codec.decode(pred, f)
        assert decoded.value != 12 * 34

        from lili import harness

        rep = harness.evaluate(model, ds.test)
        assert rep.exact_match == 0.0

    def test_baseline_output_is_binary_and_deterministic(self):
        shape = shape_for(RelationKind.MULTIPLICATION, operand_digits=2)
        spec = mlp_baseline_spec(shape)
        model = BaselineModel(TrainedNet(spec, nn.init_network(spec, 5)), shape)
        a = codec.normalize(codec.render(31, shape.input_field))
        b = codec.normalize(codec.render(47, shape.input_field))
        p1 = baseline_predict(model, a, b)
        p2 = baseline_predict(model, a, b)
        assert set(np.unique(p1)) <= {0, 1}
        assert (p1 == p2).all()

    def test_predict_shape_mismatch(self):
        shape = shape_for(RelationKind.MULTIPLICATION, operand_digits=2)
        spec = mlp_baseline_spec(shape)
        model = BaselineModel(TrainedNet(spec, nn.init_network(spec, 5)), shape)
        with pytest.raises(ShapeMismatch):
            baseline_predict(model, np.zeros((15, 10)), np.zeros((15, 10)))

    def test_trained_xor_model_maps_equal_inputs_to_zero(self):
        cfg = DatasetConfig.make(
            RelationKind.BITWISE_XOR, operand_digits=4, counts=(130, 40, 40), seed=21
        )
        ds = build_dataset(cfg)
        tc = TrainConfig(optimizer="adam", lr=2e-3, batch_size=16, max_epochs=40,
                         patience=40, seed=2)
        model, curve = models.train_baseline(ds, tc)
        assert curve.val_loss[curve.best_epoch] < curve.val_loss[0]
        f = model.shape.input_field
        for x in (1, 5, 7):
            img = codec.normalize(codec.render(x, f))
            pred = baseline_predict(model, img, img)
            assert codec.decode(pred, model.shape.output_field).value == 0

    def test_bridge_modes(self):
        ds = mul2_dataset(counts=(8, 4, 4))
        shape = ds.config.task_shape()
        carry_s, _, synth_s = dcm_specs(shape)
        rng_nets = [
            TrainedNet(carry_s, nn.init_network(carry_s, s)) for s in (1, 2)
        ]
        synth = TrainedNet(synth_s, nn.init_network(synth_s, 3))
        x = datagen.materialize_split(ds.test, shape)[0].astype(np.float64)

        binarized = DcmModel(rng_nets[0], rng_nets[1], synth, shape, "binarize")
        raw = DcmModel(rng_nets[0], rng_nets[1], synth, shape, "raw")
        u, v = binarized.subtask_outputs(x)
        manual = codec.binarize(
            synth.outputs(
                np.concatenate(
                    [
                        codec.binarize(u, 0.5) * 2.0 - 1.0,
                        codec.binarize(v, 0.5) * 2.0 - 1.0,
                    ],
                    axis=1,
                )
            ),
            0.5,
        )
        assert (binarized.predict_batch(x) == manual).all()
        raw_in = np.concatenate([u * 2.0 - 1.0, v * 2.0 - 1.0], axis=1)
        manual_raw = codec.binarize(synth.outputs(raw_in), 0.5)
        assert (raw.predict_batch(x) == manual_raw).all()

    def test_unknown_bridge_mode(self):
        ds = mul2_dataset(counts=(6, 2, 2))
        shape = ds.config.task_shape()
        carry_s, noncarry_s, synth_s = dcm_specs(shape)
        with pytest.raises(ValueError):
            DcmModel(
                zero_net(carry_s), zero_net(noncarry_s), zero_net(synth_s),
                shape, "mystery",
            )


class TestModelFiles:
    def test_baseline_roundtrip(self, tmp_path):
        shape = shape_for(RelationKind.MULTIPLICATION, operand_digits=2)
        spec = mlp_baseline_spec(shape)
        model = BaselineModel(TrainedNet(spec, nn.init_network(spec, 9)), shape)
        p = tmp_path / "m.lili"
        models.save_model(p, model)
        loaded = models.load_model(p)
        assert isinstance(loaded, BaselineModel)
        assert loaded.shape == shape
        assert models.model_bytes(loaded) == p.read_bytes()

    def test_dcm_roundtrip(self, tmp_path):
        shape = shape_for(RelationKind.MULTIPLICATION, operand_digits=2)
        carry_s, noncarry_s, synth_s = dcm_specs(shape)
        model = DcmModel(
            TrainedNet(carry_s, nn.init_network(carry_s, 1)),
            TrainedNet(noncarry_s, nn.init_network(noncarry_s, 2)),
            TrainedNet(synth_s, nn.init_network(synth_s, 3)),
            shape,
            "raw",
        )
        p = tmp_path / "m.lili"
        models.save_model(p, model)
        loaded = models.load_model(p)
        assert isinstance(loaded, DcmModel)
        assert loaded.bridge_mode == "raw"
        assert models.model_bytes(loaded) == p.read_bytes()
        x = np.random.default_rng(0).uniform(-1, 1, (3, shape.input_len))
        assert (loaded.predict_batch(x) == model.predict_batch(x)).all()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk"
        p.write_bytes(b"NOTAMODEL\n")
        with pytest.raises(BadMagic):
            models.load_model(p)

    def test_network_shape_must_match_declared_task(self, tmp_path):
        shape = shape_for(RelationKind.MULTIPLICATION, operand_digits=2)
        other = shape_for(RelationKind.MULTIPLICATION, operand_digits=3)
        spec = mlp_baseline_spec(other)
        model = BaselineModel(TrainedNet(spec, nn.init_network(spec, 9)), other)
        blob = models.model_bytes(model)
        # swap the shape header for an incompatible one
        lines = blob.split(b"\n", 2)
        import json

        head = json.loads(lines[1])
        head["shape"] = shape.to_json_dict()
        forged = lines[0] + b"\n" + json.dumps(head, separators=(",", ":")).encode() + b"\n" + lines[2]
        p = tmp_path / "forged"
        p.write_bytes(forged)
        with pytest.raises(ShapeMismatch):
            models.load_model(p)
