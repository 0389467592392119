"""Unified conversational recommendation via gated two-teacher knowledge
distillation: a recommendation teacher (relational graph convolutions over
item/word knowledge graphs) and a dialogue teacher (encoder-decoder LM over
a unified word+item vocabulary) are distilled into a single student whose
per-step supervision is routed by the dialogue teacher's item probability
mass (hard threshold or soft mixture)."""

__version__ = "0.1.0"
