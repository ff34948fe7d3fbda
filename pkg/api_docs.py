"""
Command-Line and Output Reference
Documented subcommands, exit codes and the CSV column schemas
"""

EVENT_COLUMNS = (
    'seq', 'epoch', 'kind', 'observer', 'subject', 'velocity', 'pos_x', 'pos_y',
    'trust', 'category', 'nonce', 'attempt', 'aim_x', 'aim_y', 'detail'
)

# Final score-table state, one row per (observer, subject)
TABLE_COLUMNS = ('epoch', 'observer', 'subject', 'trust', 'category')

METRIC_COLUMNS = (
    'seed', 'sybil_fraction', 'lambda', 'accuracy', 'f1', 'specificity', 'mean_detection_epochs',
    'fp_rate', 'tp', 'fp', 'tn', 'fn', 'precision', 'recall', 'median_detection_epochs',
    'max_detection_epochs', 'mean_honest_resolution_epochs', 'ghost_challenges',
    'ghost_challenges_answered', 'sweep_param', 'sweep_value'
)

SUMMARY_KEY_COLUMNS = ('sweep_param', 'sweep_value', 'runs')

# Seed-averaged columns of summary.csv, after the key columns
SUMMARY_MEAN_COLUMNS = (
    'accuracy', 'f1', 'specificity', 'mean_detection_epochs', 'fp_rate', 'precision', 'recall',
    'median_detection_epochs', 'max_detection_epochs', 'mean_honest_resolution_epochs',
    'tp', 'fp', 'tn', 'fn', 'ghost_challenges', 'ghost_challenges_answered'
)

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_USAGE_ERROR = 2

# Help text for every subcommand and option; cli.build_parser reads it
CLI_DOCUMENTATION = {
    "prog": "taser-sim",
    "description": "Deterministic VANET simulation of trust scoring, velocity hypothesis tests and directional presence challenges",

    "commands": {
        "run": {
            "description": "Execute one scenario and write events.csv, tables.csv, metrics.csv and config.yaml",
            "options": {
                "--config": "YAML scenario file (defaults to the 'default' preset)",
                "--seed": "Override scenario.seed",
                "--out": "Output directory (TASER_SIM_OUT or ./results)"
            }
        },
        "sweep": {
            "description": "Repeat a scenario over a parameter grid and several seeds; writes metrics.csv and summary.csv",
            "options": {
                "--config": "YAML scenario file",
                "--param": "Scenario parameter to vary",
                "--values": "Comma-separated values, e.g. 0.05,0.10,0.15",
                "--seeds": "Runs per value (default 5)",
                "--jobs": "Parallel worker processes (default 1, -1 for all cores)",
                "--out": "Output directory (TASER_SIM_OUT or ./results)"
            }
        },
        "validate": {
            "description": "Parse and validate a scenario file without running it; prints OK or one violation per line",
            "options": {
                "--config": "YAML scenario file"
            }
        },
        "audit": {
            "description": "Replay events.csv and cross-check trust updates, suspect events and challenge exchanges",
            "options": {
                "--events": "Path to events.csv",
                "--config": "Scenario the events were produced with (defaults to config.yaml beside events.csv)"
            }
        }
    },

    "common_options": {
        "--log-level": "DEBUG | INFO | WARNING | ERROR (default INFO)",
        "--log-json": "Emit JSON log records on stderr"
    },

    "outputs": {
        "events.csv": list(EVENT_COLUMNS),
        "tables.csv": list(TABLE_COLUMNS),
        "metrics.csv": list(METRIC_COLUMNS),
        "summary.csv": list(SUMMARY_KEY_COLUMNS + SUMMARY_MEAN_COLUMNS)
    },

    "exit_codes": {
        EXIT_OK: "Success",
        EXIT_RUNTIME_ERROR: "Runtime failure (I/O error, audit mismatch)",
        EXIT_USAGE_ERROR: "Usage or configuration error"
    }
}
