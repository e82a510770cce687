"""External deep-image-prior denoiser worker.

This package is an independent implementation of the framed
request/response protocol and binary tensor format published by the
``cassikit`` toolkit.  It deliberately avoids importing ``cassikit``:
the two sides are meant to interoperate only through the documented
byte formats, so this package re-derives the forward model and the
codecs from that documentation alone.
"""

from dipworker.protocol import (PROTOCOL_VERSION, TAG_BYE, TAG_ERR, TAG_INIT,
                                TAG_RESP, TAG_STEP, pack_frame, read_frame,
                                tensor_from_bytes, tensor_to_bytes)
from dipworker.forward import apply_H, measurement_shape
from dipworker.network import DipNetwork
from dipworker.session import WorkerConfig, WorkerSession

__version__ = "0.1.0"
