"""Sys. 1 end to end: data, training, warm-started solves.

Generates a small random-walk dataset, trains the planner network with the
Lagrangian loss and compares iteration counts of cold and network-initialized
solves on the held-out states. Runs in about a minute.
"""

from eimpc.active_set import Termination, get_solver
from eimpc.batch_qp import assemble_batch
from eimpc.datagen import WalkConfig, generate_data, stack_records
from eimpc.neural import TrainConfig, loss_data, train
from eimpc.planner import open_loop_eval
from eimpc.systems import build_benchmark


def main():
    spec = build_benchmark(1)
    qp = assemble_batch(spec)
    solver = get_solver(qp)

    data = generate_data(spec, WalkConfig(500, 100, 100, seed=3), qp, solver)
    print(f"{len(data.train)} training and {len(data.test)} test records")

    ld = loss_data(qp, *stack_records(data.train))
    model, log = train(ld, qp, TrainConfig(epochs=60, batch_size=64, seed=3),
                       widths=[2, 32, 32, qp.dims.d_p])
    print(f"validation loss {log.val_loss[0]:.3g} -> {log.val_loss[-1]:.3g}")

    criteria = [Termination.parse(c) for c in ("pf", "pfsub", "optimal")]
    rows = open_loop_eval(qp, data.test, model, criteria, solver=solver)
    for r in rows:
        print({k: (round(v, 3) if isinstance(v, float) else v) for k, v in r.items()})


if __name__ == "__main__":
    main()
