"""Recursive l_p gadget point sets with distortion certificates and
embedding experiments."""

from .certifier import (CapAudit, CertifierParams, Deltas, LemmaStep,
                        PotentialWitness, ViolationReport, audit_internal_edges,
                        cap_audit, certified_lower_bound, certifier_params,
                        compute_deltas, delta_sum_audit, edge_potential,
                        edge_potentials, epsilon_for, growth_constant,
                        lemma_step, lower_bound_formula, potential_cap,
                        witness_chain)
from .doubling import (DoublingEstimate, EnvelopeReport, doubling_estimate,
                       doubling_estimate_points, envelope_check)
from .embedlab import (OptimizerConfig, SweepResult, SweepRow,
                       gaussian_projection, identity_embedding, stress_minimize,
                       stress_surrogate, tradeoff_sweep)
from .errors import (CapacityError, InvariantViolation, LaaksoLabError,
                     OptimizerError, PreconditionError, SchemaError)
from .instance import (Diagonal, Edge, Instance, Params, Point, build_instance,
                       child_points, closed_form_counts, instance_from_dict,
                       instance_to_dict)
from .metric import (DistortionReport, Embedding, distortion,
                     embedding_from_dict, embedding_to_dict, lp_dist,
                     normalize_nonexpansive, point_segment_distance)

__version__ = "0.1.0"
