"""Run the fast acceptance checks (everything except the training and benchmark experiments)."""

from coreguide.experiments import (
    check_cores,
    check_determinism,
    check_encoding,
    check_focal,
    check_gradients,
    check_overhead,
    check_seeding,
    check_solver,
)

if __name__ == "__main__":
    for fn in (check_gradients, check_solver, check_seeding, check_cores, check_encoding, check_focal,
               check_overhead, check_determinism):
        print(fn().line(), flush=True)
