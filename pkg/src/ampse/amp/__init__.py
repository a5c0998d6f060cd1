""" Approximate message passing iterations. """
from .cs import (CsAmpState, CsAmpTrace, CsProblem, compute_onsager, compute_q,
                 cs_amp_run, effective_snr, make_cs_problem, run_problem, trace_frame)
from .embedding import (BipartiteInstance, IdentityReport, build_bipartite, build_embedding,
                        change_of_variables, check_bipartite_identity,
                        check_symmetric_identity, run_embedding_checks)
from .orbit import (BipartiteTrace, CallableNonlinearity, IdentityNonlinearity,
                    LinearNonlinearity, Nonlinearity, OrbitRecord, OrbitTrace,
                    SymmetricInstance, TanhNonlinearity, ZeroNonlinearity,
                    bipartite_amp_run, group_labels, group_moments,
                    nonlinearity_from_config, symmetric_amp_run)
