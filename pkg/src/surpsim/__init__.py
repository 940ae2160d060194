"""Predictive-uncertainty measures over language-model continuations.

The toolkit estimates a catalog of responsive and anticipatory measures
(surprisal, probability, information value, next-symbol expectations,
sequence entropy, and friends) either in closed form or by Monte Carlo
simulation of continuations, analyzes estimator variance and runtime, and
scores each measure's out-of-sample predictive power for psycholinguistic
data with a cross-validated regression and permutation-test harness.
"""

from .analysis import (BootstrapReport, CorrelationMatrix, ResampleCorrelation,
                       bootstrap_scores, coefficient_of_variation,
                       correlation_matrix, pearson, profile_runtime,
                       resample_correlation, spearman)
from .backends import (EnumeratedDistribution, MemorylessBackend,
                       NextSymbolDistribution, NGramBackend,
                       enumerate_distribution, load_corpus, next_distribution,
                       prefix_probability, sample, string_probability,
                       train_ngram)
from .config import RunConfig, load_config, load_manifest, write_manifest
from .embeddings import (EmbeddingTable, RemoteEmbeddings, cosine_distance,
                         load_embeddings, represent)
from .errors import (BackendError, ConfigError, DataError, ProtocolError,
                     SurpsimError, TransportError, UnsupportedModeError)
from .estimate import (Estimate, EstimateRequest, aggregate_word,
                       estimate_exact, estimate_mc, score_samples,
                       simulate_batch)
from .evaluation import (EvalReport, RegressionSpec, Stimulus, build_design,
                         delta_r2_cv, laplace_cloze, load_dataset, ols_fit,
                         permutation_test, r2_out_of_sample)
from .measures import (Measure, ScoreContext, Warping, catalog, get_measure,
                       is_anticipatory, score, score_indicator)
from .remote import RemoteBackend
from .tokens import DEFAULT_EOS, Alphabet, Tokens, is_prefix, tokenize

__version__ = "0.1.0"
