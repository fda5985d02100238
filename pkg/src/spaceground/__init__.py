"""Coarse-to-fine grounding of spatial instructions.

A VLM proposes a coarse elliptical region over a grid-annotated image and two
validators accept it or feed failure reasoning back into the next prompt; a
superpixel-graph residual network then refines the accepted region into a
fine-grained binary mask.
"""

__version__ = "0.1.0"
