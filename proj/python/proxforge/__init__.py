"""proxforge: proximity VQA dataset generation and scoring toolkit."""

from ._core import (  # noqa: F401
    __version__,
    audit_scenes,
    bbox_center,
    classify_caption,
    compare_proximity,
    compute_perception_metrics,
    compute_proximity_metrics,
    convert_to_eval,
    disparity_to_depth,
    generate,
    normalize_depth,
    normalize_phrase,
    oracle,
    parse_perception_response,
    parse_proximity_response,
    read_depth_file,
    sample_object_depth,
    score,
    stats,
    template_inventory,
    write_rawf32,
)
