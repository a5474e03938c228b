"""Class-adaptive multi-expert consensus for rectifying noisy labels under
long-tailed class distributions, with a synthetic-data harness and a
statistical verification suite.
"""

from .consensus import (KPolicy, TopKSet, accumulate, class_contribution,
                        compute_k, epoch_consensus, initial_frequency,
                        k_per_class, rectify, reliability_weight, topk)
from .core import (ClassCounts, ConfidenceVector, Dataset, FrequencyMatrix,
                   RectifiedState, ValidationReport, validate_dataset)
from .experts import (CosineHead, ExpertKind, be_confidence, ie_confidence,
                      ie_confidence_all, load_confidence_file,
                      save_confidence_file, te_confidence, te_confidence_all)
from .metrics import (GroupSplit, MetricRecord, accuracy, group_split,
                      macro_f1, noise_rate_by_group, per_class_noise_rate)
from .synth import (ClusterSpec, ImbalanceSpec, NoiseSpec,
                    empirical_noise_rate, inject_noise, longtail_profile,
                    synth_features, transition_matrix)
from .trainer import (EpochRecord, OptimizerState, RunReport, TrainConfig,
                      la_grad, la_loss, run_care, sgd_step, smoothed_prior)
from .verify import (ConsensusPrecisionStats, Prop1Result, Theorem1Result,
                     TheoryTrialConfig, ablation_single_expert,
                     baseline_ie_probs, brute_force_frequency,
                     mc_proposition1, mc_proposition_pairs, mc_theorem1,
                     oracle_equivalence)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
