import json

import numpy as np
import pytest

from neurocomp import corpus
from neurocomp.asm import oracle_run
from neurocomp.compiler import compile_program
from neurocomp.controllers import ControllerSpec
from neurocomp.encodings import decode
from neurocomp.experiments import (
    CircuitBackend,
    StepBudgetError,
    TableBackend,
    check_budget,
    resolve_config,
    run_depth_study,
    run_experiment,
    run_tables_vs_circuits,
)
from neurocomp.substrate import Tensor, TrainConfig
from neurocomp.tasks import make_task
from neurocomp.training import (
    Binding,
    controller_for,
    controller_forward,
    default_binding,
    default_library,
    fib_steps,
    inspect_parse,
    train,
)


def _setup(kind="mod_arith", n=16, encoder="pool", seed=0, size=None):
    task = make_task(kind, n, seed=seed, size=size)
    lib = default_library(task)
    rho = compile_program(lib.library(), lib.layout)
    binding = default_binding(task, rho)
    ctrl = controller_for(task, binding, encoder, seed)
    return task, lib, rho, binding, ctrl


@pytest.mark.parametrize("encoder", ["pool", "attention"])
def test_controller_outputs_are_distributions(encoder):
    task, lib, rho, binding, ctrl = _setup(encoder=encoder)
    selection, regs, S0 = controller_forward(ctrl, task.test.tokens[:7], rho, binding, lib.layout)
    np.testing.assert_allclose(selection.data.sum(axis=-1), 1.0)
    for r in binding.registers:
        np.testing.assert_allclose(regs[r].data.sum(axis=-1), 1.0)
        np.testing.assert_allclose(S0.R.data[:, r], regs[r].data)
    np.testing.assert_allclose(S0.c.data.sum(axis=-1), 1.0)
    np.testing.assert_array_equal(decode(S0.R.data[:, 0]), 1)


def test_single_program_selection_is_a_dirac_counter():
    task, lib, rho, binding, ctrl = _setup("fib_depth(1)")
    selection, _, S0 = controller_forward(ctrl, task.test.tokens[:3], rho, binding, lib.layout)
    np.testing.assert_array_equal(selection.data, 1.0)
    np.testing.assert_array_equal(S0.c.data, np.eye(rho.n_lines)[[0, 0, 0]])


def test_counter_is_a_mixture_of_entry_points():
    task, lib, rho, binding, ctrl = _setup()
    selection, _, S0 = controller_forward(ctrl, task.test.tokens[:2], rho, binding, lib.layout)
    support = {rho.entry_points[e] for e in binding.entries}
    off = [i for i in range(rho.n_lines) if i not in support]
    assert np.all(S0.c.data[:, off] == 0)
    for k, e in enumerate(binding.entries):
        np.testing.assert_allclose(S0.c.data[:, rho.entry_points[e]], selection.data[:, k])


def test_controller_shape_validation():
    with pytest.raises(ValueError):
        ControllerSpec(10, 5, 1, (2,), 16, encoder="lstm")
    with pytest.raises(ValueError):
        ControllerSpec(10, 5, 0, (2,), 16)


def test_training_keeps_library_bit_identical_and_is_deterministic():
    outs = []
    for _ in range(2):
        task, lib, rho, binding, ctrl = _setup(size=96)
        res = train(task, ctrl, rho, lib.layout, TrainConfig(learning_rate=0.01, max_epochs=2, batch_size=32),
                    binding)
        assert res.extra["library_frozen"] and res.library.unchanged()
        assert res.library.logits.data.tobytes() == rho.logits().tobytes()
        outs.append((res.history, [p.data.copy() for p in ctrl.parameters()]))
    assert outs[0][0] == outs[1][0]
    for a, b in zip(outs[0][1], outs[1][1]):
        assert a.tobytes() == b.tobytes()
    assert {row["split"] for row in outs[0][0]} == {"train", "test"}


def test_train_validates_binding():
    task, lib, rho, binding, ctrl = _setup(size=40)
    bad = Binding(("nope",), binding.registers, 0, 3)
    with pytest.raises(ValueError):
        train(task, ctrl, rho, lib.layout, TrainConfig(max_epochs=1), bad)


def test_short_training_improves_fib_loss():
    task, lib, rho, binding, _ = _setup("fib_depth(1)", size=120)
    ctrl = controller_for(task, binding, "pool", 0, head_gain=6.0)
    res = train(task, ctrl, rho, lib.layout, TrainConfig(learning_rate=0.01, max_epochs=3, batch_size=8), binding)
    losses = res.series("train", "loss")
    assert res.status == "ok" and losses[-1] < losses[0]


def test_inspect_parse_accepts_commutative_swaps():
    task, lib, rho, binding, ctrl = _setup(size=60)
    split = task.test

    class Oracle:
        def __init__(self, swap):
            self.swap = swap

        def forward(self, tokens):
            sel = Tensor(np.eye(len(binding.entries))[split.labels])
            a, b = split.inputs[:, 0], split.inputs[:, 1]
            if self.swap:
                a, b = b, a
            return sel, {2: Tensor(np.eye(16)[a]), 3: Tensor(np.eye(16)[b])}

    assert inspect_parse(Oracle(False), split, binding) == 100.0
    swapped = inspect_parse(Oracle(True), split, binding)
    commutative = np.isin(np.array(binding.entries)[split.labels], ["add", "mul", "max", "min"])
    same = split.inputs[:, 0] == split.inputs[:, 1]
    assert swapped == pytest.approx(100.0 * np.mean(commutative | same))


def test_step_budget():
    assert fib_steps(3) == 21 and check_budget(2, None) == 15
    with pytest.raises(StepBudgetError):
        check_budget(3, 8)
    with pytest.raises(StepBudgetError):
        run_depth_study([3], [0], {"steps": 8})


def test_fib_step_count_matches_oracle():
    lib = corpus.load("fib").library()
    for d in (1, 2, 3):
        assert oracle_run(lib, regs0={2: 1, 3: 1, 4: d}, layout=corpus.SMALL).steps == fib_steps(d)


def test_resolve_config_rejects_unknowns():
    with pytest.raises(KeyError):
        resolve_config("nope")
    with pytest.raises(KeyError):
        resolve_config("mod_arith", {"lr": 1})
    assert resolve_config("mod_arith", {"epochs": 2})["epochs"] == 2


def test_backends():
    t = TableBackend(16)
    with pytest.raises(ValueError):
        t.encode(np.array([[16, 0]]))
    c = CircuitBackend(6)
    x = c.encode(np.array([40]))
    y = c.encode(np.array([30]))
    assert c.decode(c.forward(x, y))[0] == (40 + 30) % 64


def test_tables_vs_circuits_small_run():
    out = run_tables_vs_circuits({"seeds": [0], "epochs": 1, "size": 256})
    table, circuit = out["summary"]
    assert table["backend"] == "table" and table["out_of_range"] is None
    assert circuit["representable_out_of_range"] and not table["representable_out_of_range"]
    assert out["chance"] == pytest.approx(100 / 64)


def test_run_experiment_writes_artifacts(tmp_path):
    out = run_experiment("memorize", {"seeds": [0], "epochs": 20, "check_every": 10}, tmp_path)
    assert (tmp_path / "memorize_metrics.csv").read_text().startswith("seed,epoch,loss")
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["epochs"] == 20 and cfg["program"] == "fib"
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["experiment"] == "memorize" and summary["summary"][0]["seed"] == 0
    assert out["summary"][0]["status"] in ("converged", "max_epochs")
