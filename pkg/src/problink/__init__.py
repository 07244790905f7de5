"""problink: learning which orders belong with which medical problems.

A knowledge-base-completion pipeline over clinical encounter logs: mine
co-occurrence and specialty features, train code embeddings, score
(problem, relation, target) triplets with a bilinear model plus a linear
feature head, rank candidates for expert annotation, and evaluate with
rank-based metrics against annotated negatives.
"""

from .kb import (
    AuditEntry,
    Code,
    CodeSystem,
    KBError,
    KnowledgeBase,
    Label,
    Problem,
    RelationKind,
    RELATION_ORDER,
    Split,
    SplitMode,
    Triplet,
    add_annotation,
    load_kb,
    save_kb,
    split_by_problem,
    split_random,
)
from .encounters import (
    EncounterRecord,
    EncounterStore,
    IngestError,
    Order,
    Setting,
    Vocabulary,
    build_vocabulary,
    ingest,
)
from .features import (
    CoocDefinition,
    FeatureSet,
    PairFeatures,
    build_features,
    candidate_list,
    cooccurrence,
    importance_score,
)
from .embeddings import (
    EmbeddingSource,
    EmbeddingTable,
    InitWeighting,
    init_problem_embedding,
    knn_transfer,
    load_embeddings,
    save_embeddings,
    train_skipgram,
    vocab_intersection,
)
from .model import (
    Ablation,
    ModelParams,
    NegativeStrategy,
    TrainConfig,
    init_params,
    load_model,
    make_scorer,
    margin_loss,
    sample_negatives,
    save_model,
    score_emb,
    score_full,
    score_spec,
    train,
)
from .evaluation import (
    EvalReport,
    TiePolicy,
    cohen_kappa,
    evaluate,
    frequency_bin_report,
    nearest_problems,
    per_problem_report,
    rank_one,
)
from .baselines import (
    OntologyMaps,
    baseline_scorer,
    load_ontology_maps,
    med_relevant,
    proc_relevant,
)
from .synth import PlantSpec, generate

__version__ = "0.1.0"
