"""Object mining and recognition for local-feature photo collections.

The package discovers the distinct objects a photo collection keeps coming
back to, picks a central view (the iconoid) for each, matches new queries
against a compact representative index, and names the results from user
tags. Everything is deterministic given a configuration and a seed.

Layered roughly bottom-up:

    data_model        feature sets, datasets, binary + manifest persistence
    vocabulary        visual words: k-means training, quantization, tf-idf
    retrieval_index   inverted index with cosine ranking
    geometry          RANSAC homographies, verification, polygon clipping
    match_graph       pairwise verification graph over a collection
    iconoid_shift     mode seeking in frame-overlap space
    recognition       the five query scoring methods
    compaction        shrinking each cluster's representative set
    tag_mining        naming clusters from noisy tags
    synthgen          synthetic scenes with exact ground truth
    eval_harness      query grouping, rated metrics, report assembly
    pipeline          glue: dataset in, ready engine out
    cli               one subcommand per stage
"""

from .errors import (EngineError, FormatError, MissingArtifactError,
                     ValidationError)

__version__ = "0.1.0"

__all__ = [
    "EngineError",
    "FormatError",
    "MissingArtifactError",
    "ValidationError",
    "__version__",
]
