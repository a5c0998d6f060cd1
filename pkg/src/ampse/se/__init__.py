""" State evolution recursions. """
from .coupled import (SeSchedule, converged_mse, coupled_se_run, critical_delta,
                      first_passage_times, predicted_block_mse, schedule_frame)
from .general import (ConstantSideInfo, CoordinateSideInfo, GeneralSeState,
                      RademacherSideInfo, empirical_sigma_hat, expectation, general_se_run,
                      initial_sigma_hat, monte_carlo, psd_sqrt, side_info_from_config,
                      sigma_frame)
from .identity import (DiagonalIdentityReport, EmbeddingSeInstance, embedding_se_instance,
                       verify_diagonal_identity)
