"""Extractive review summarization in sentence-embedding space."""

from .corpus import (Corpus, Document, SentenceRecord, SyntheticConfig,
                     TargetSummary, gen_synthetic, load_corpus, write_corpus)
from .geometry import angle, cosine, gain, omega, top_k_by_angle
from .model import (DecoderTrace, ModelParams, decode_step, encode,
                    init_params, init_prediction, load_checkpoint,
                    run_decoder, save_checkpoint)
from .selection import (SelectionResult, post_select_candidate,
                        select_baseline, select_top_k)
from .training import (StepLoss, TrainConfig, backward, gradient_check,
                       step_losses, train)

__version__ = "0.1.0"
