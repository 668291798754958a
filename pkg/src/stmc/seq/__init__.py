from .blstm import BLSTMEncoder, LSTMCell, blstm_forward, lstm_sequence
from .ctc import BLANK, CTCError, collapse, collapsed_distribution, ctc_brute_force, ctc_forward_backward, ctc_loss
from .decode import beam_search_decode, greedy_decode
from .losses import joint_loss, smooth_l1_regression
from .wer import WerResult, corpus_wer, edit_counts, wer

__all__ = [
    "BLANK",
    "BLSTMEncoder",
    "CTCError",
    "LSTMCell",
    "WerResult",
    "beam_search_decode",
    "blstm_forward",
    "collapse",
    "collapsed_distribution",
    "corpus_wer",
    "ctc_brute_force",
    "ctc_forward_backward",
    "ctc_loss",
    "edit_counts",
    "greedy_decode",
    "joint_loss",
    "lstm_sequence",
    "smooth_l1_regression",
    "wer",
]
