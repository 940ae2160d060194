"""HTTP bridge around a pretrained causal language model.

Exposes next-token log probabilities, seeded ancestral sampling, and
input-layer embeddings over a small JSON protocol, so that numeric
pipelines can treat the model as an opaque probability oracle.
"""

from .lm import LanguageModel
from .server import create_app, serve

__version__ = "0.1.0"
