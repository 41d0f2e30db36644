"""Small CLI configs shared by the CLI tests and the determinism criterion."""

SMALL = {
    "periodic": {"periods": [1, 2, 3, 4, 5, 6], "list_points_up_to": 3},
    "build": {"max_period": 6, "depth": 4, "grid": 32},
    "render": {"stage": "stage.json", "format": "png", "size": 256, "orbits": 2, "orbit_steps": 40, "phase_portrait": True},
    "mixing": {"n_max": 10, "birkhoff_n": 20000, "birkhoff_tol": 0.02, "stage": {"max_period": 6, "depth": 2}, "samples": 20000, "depth_grid": 2},
    "spec": {
        "control_instances": 4,
        "saddle_draws": 500,
        "visit_starts": 10,
        "visit_steps": 1000,
        "contradiction_starts": 10,
        "contradiction_length": 200,
        "adversarial_length": 6,
    },
}
