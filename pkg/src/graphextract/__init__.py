"""Model extraction toolkit for inductive graph neural networks."""

from graphextract.graphs import (
    Graph,
    SplitSpec,
    Subgraph,
    khop_subgraph,
    knn_graph,
    load_dataset,
    sample_neighbors,
    save_dataset,
    split_inductive,
    synth_graph,
)

__version__ = "0.1.0"
