"""Few-shot natural language generation for task-oriented dialog.

A desk-scale conditional language model toolkit: dialog acts are
serialized into a control-code prefix, a small causal transformer is
trained to realize them as utterances, and generation is reranked by
slot error rate.  Submodules are imported on demand; the command-line
entry point lives in ``scgpt.cli``.
"""

__version__ = "0.1.0"
