"""seqnet: graphical models for genomic data.

Conditional-independence tests, PC-stable and Markov-blanket learning,
correlation networks, an additive kinship regression model and a
simulation harness.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DataError, GraphError, KinshipCaveatWarning, SeqnetError, SeqnetWarning,
                     UntestableError, UntestableWarning)
from .data import (ContingencyTable, Dataset, GenotypeTable, VariableMeta, build_table, contingency_table,
                   dataset_from_arrays, load_dataset, load_genotypes, recode_snps)
from .graphs import Dag, LabelledGraph, Pdag, dag_to_cpdag, export_graph, markov_blanket_of, shd, \
    skeleton_precision_recall
from .citests import TestResult, ci_test, fisher_z_test, g2_test, jt_statistic, jt_test, permutation_pvalue
from .learning import (LearnConfig, PCResult, blanket_network, learn_all_blankets, learn_markov_blanket,
                       pc_learn, pc_skeleton, symmetric_mb_correction)
from .association import (correlation_matrix, gene_association_network, relevance_network,
                          shrinkage_partial_correlations)
from .genomics import AdditiveModelFit, KinshipMatrix, cv_lambda, fit_additive, gwas_feature_select, \
    load_kinship, predict_additive
from .simulation import (GeneratorConfig, SnpScenario, power_benchmark, recovery_benchmark, simulate_dag,
                         simulate_discrete, simulate_gaussian, simulate_snp_trait)

__all__ = [
    "__version__",
    "ConfigError",
    "DataError",
    "GraphError",
    "KinshipCaveatWarning",
    "SeqnetError",
    "SeqnetWarning",
    "UntestableError",
    "UntestableWarning",
    "ContingencyTable",
    "Dataset",
    "GenotypeTable",
    "VariableMeta",
    "build_table",
    "contingency_table",
    "dataset_from_arrays",
    "load_dataset",
    "load_genotypes",
    "recode_snps",
    "Dag",
    "LabelledGraph",
    "Pdag",
    "dag_to_cpdag",
    "export_graph",
    "markov_blanket_of",
    "shd",
    "skeleton_precision_recall",
    "TestResult",
    "ci_test",
    "fisher_z_test",
    "g2_test",
    "jt_statistic",
    "jt_test",
    "permutation_pvalue",
    "LearnConfig",
    "PCResult",
    "blanket_network",
    "learn_all_blankets",
    "learn_markov_blanket",
    "pc_learn",
    "pc_skeleton",
    "symmetric_mb_correction",
    "correlation_matrix",
    "gene_association_network",
    "relevance_network",
    "shrinkage_partial_correlations",
    "AdditiveModelFit",
    "KinshipMatrix",
    "cv_lambda",
    "fit_additive",
    "gwas_feature_select",
    "load_kinship",
    "predict_additive",
    "GeneratorConfig",
    "SnpScenario",
    "power_benchmark",
    "recovery_benchmark",
    "simulate_dag",
    "simulate_discrete",
    "simulate_gaussian",
    "simulate_snp_trait",
]
