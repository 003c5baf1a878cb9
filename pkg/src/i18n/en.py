STRINGS = {
    # Startup
    "loading_manifest": "Loading manifest {path}...",
    "manifest_loaded": "  {total} pairs ({train} train, {test} test)",
    "config_written": "Resolved config written to {path}",
    "model_footprint": "  Model: scheme {scheme}, {params:,} parameters ({mb:.1f} MB at 32 bit), descriptor {dim}-d",

    # Phases
    "phase_synth": "[{current}/{total}] Rendering synthetic world ({n} locations)...",
    "phase_train": "[{current}/{total}] Training for {steps} steps (batch {batch}, {triplets} triplets/step)...",
    "phase_resume": "  Resuming from {path} at step {step}",
    "phase_embed": "[{current}/{total}] Embedding {n} {side} images...",
    "phase_sweep": "[{current}/{total}] North-error sweep over {levels} levels...",
    "phase_ablation": "[{current}/{total}] Ablation: {runs} training runs (schemes {schemes}; seeds {seeds})...",
    "ablation_run_done": "  {scheme} seed {seed}: r@1 {r1:.2%}, loss {first:.4f} -> {last:.4f}",
    "step_line": "  step {step:>6}  epoch {epoch:>3}  loss {loss:.6f}",

    # Results
    "synth_done": "Synthetic world written to {path}: {train} train / {test} test pairs",
    "train_done": "Training finished at step {step}: loss {first:.4f} -> {last:.4f}",
    "checkpoint_saved": "Checkpoint: {path}",
    "index_saved": "Index of {n} x {dim} written to {path}",
    "orient_saved": "{view} U-V map ({width}x{height}, {style}) written to {path}",
    "no_positions": "Index has no positions; localisation skipped",

    # Tables
    "table_recall_title": "Retrieval Recall",
    "table_localization_title": "Metric Localisation",
    "table_sweep_title": "Recall vs North Error",
    "table_query_title": "Top-{k} Satellite Tiles",
    "table_train_title": "Training Summary",
    "table_ablation_title": "Scheme Ablation (median over seeds)",
    "table_checks_title": "Ablation Checks (recall points)",
    "col_metric": "Metric",
    "col_k": "K",
    "col_recall": "Recall",
    "col_level": "Error (deg)",
    "col_rank": "#",
    "col_id": "Tile",
    "col_distance": "Sq. distance",
    "col_position": "Position",
    "col_value": "Value",
    "col_scheme": "Scheme",
    "col_runs": "Runs",
    "col_check": "Check",
    "col_observed": "Observed",
    "col_threshold": "Threshold",
    "col_result": "Result",
    "row_queries": "Queries",
    "row_database": "Database",
    "row_query_time": "Mean query time",
    "row_radius": "Radius",
    "row_steps": "Steps",
    "row_first_loss": "First loss",
    "row_last_loss": "Last loss",
    "row_parameters": "Parameters",
    "row_parameter_bytes": "Parameter storage",
    "na": "N/A",
    "check_pass": "PASS",
    "check_fail": "FAIL",
    "check_skipped": "SKIPPED",
    "check_uv_gain": "Scheme I r@1 gain over RGB baseline (min)",
    "check_scheme_gap": "Scheme II vs Scheme I r@1 gap (max)",
    "check_sweep_rise": "Scheme I sweep r@1 largest rise (max)",

    # Export
    "exported_json": "Results exported to: {path}",
    "exported_csv": "Results exported to: {path}",

    # Errors
    "error_validation": "Invalid input: {error}",
    "error_io": "I/O error: {error}",
    "error_numeric": "Numeric error: {error}",
}
