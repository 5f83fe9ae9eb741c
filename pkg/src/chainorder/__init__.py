"""chainorder: learn a Markov transition operator and the order that generated the data."""

from .data import DataFormatError, Dataset
from .datagen import (LabeledTrajectory, gen_bitflip_chain, gen_linear_dynamics,
                      gen_rotation_chain, rotation_matrix, shuffle_with_permutation,
                      shuffle_with_truth)
from .evaluation import OrderReport, evaluate_order, kendall_tau_b, nn_order, propagate
from .nn import AdamState, DenseLayer, Mlp, adam_step, grad_check, mlp_backward, mlp_forward
from .oneshot import (Episode, EpisodeResult, build_episode, class_chain,
                      class_log_likelihood, classify)
from .ordering import (EuclideanScorer, ModelScorer, TabularScorer, TransitionScorer,
                       brute_force_order, check_permutation, greedy_order,
                       greedy_order_sampled, sequence_log_likelihood)
from .seeding import derive_rng
from .training import (ModelDimensionError, ModelFormatError, ModelVersionError,
                       TrainConfig, TrainHistory, TrainingError, load_model,
                       sample_batch, save_model, train)
from .transition import (GatedTransitionNet, bernoulli_log_mass, gaussian_log_density,
                         log_transition, log_transition_grad, log_transition_matrix,
                         sample_next, transition_stats)

__version__ = "0.1.0"
