from .data import (  # noqa
    read_checkpoint,
    read_dataset,
    read_diag_cache,
    read_graph,
    write_checkpoint,
    write_dataset,
    write_diag_cache,
    write_graph,
    write_history,
    write_report_json,
)
