"""Python bindings for the taskforge core library."""

try:
    from ._taskforge import (  # packaged layout: extension lives in the package
        SampleRef,
        TaskforgeError,
        ablate_by_cap,
        ablate_by_task_count,
        cosine,
        distribution,
        estimate_tokens,
        majority,
        parse_filter_response,
        parse_path,
        parse_vote,
        render_path,
        top_k,
    )
except ImportError:
    from _taskforge import (
        SampleRef,
        TaskforgeError,
        ablate_by_cap,
        ablate_by_task_count,
        cosine,
        distribution,
        estimate_tokens,
        majority,
        parse_filter_response,
        parse_path,
        parse_vote,
        render_path,
        top_k,
    )

__all__ = [
    "SampleRef",
    "TaskforgeError",
    "ablate_by_cap",
    "ablate_by_task_count",
    "cosine",
    "distribution",
    "estimate_tokens",
    "majority",
    "parse_filter_response",
    "parse_path",
    "parse_vote",
    "render_path",
    "top_k",
]
