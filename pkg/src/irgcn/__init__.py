"""Link prediction on heterogeneous graphs with relational GCNs and
inductively computed relation embeddings."""

__version__ = "0.1.0"
