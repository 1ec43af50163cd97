"""
Querying a black-box prediction service
=======================================

The black-box target in the evaluation is an ordinary classifier hidden
behind HTTP. Clients only ever see label names and scores, never logits or
gradients. This script starts the service on a free port, queries it, and
checks that the wire answers agree with in-process inference.
"""
import numpy as np

from foolforge.oracle import OracleClient, OracleServer
from foolforge.victims import TrainConfig, get_architecture, make_synthetic_dataset, predict, train_classifier

train, val = make_synthetic_dataset(600, 100, seed=0)
model = train_classifier(get_architecture("strided-cnn"), train, val, TrainConfig(epochs=2), seed=0)

###############################################################################
# Serve and ask
# -------------
# Port 0 lets the OS choose. The context manager stops the server and frees
# the socket on exit.

with OracleServer(model, "127.0.0.1", 0) as server:
    client = OracleClient(server.url)
    print("serving at", server.url)
    for label, score in client.query(val.images[0], top_k=3):
        print(f"  {label:<10} {score:.3f}")
    wire = client.top1(val.images[:50])

###############################################################################
# Parity
# ------
# Inputs travel as float32, which is well inside the margin of any decision.

local = predict(model, val.images[:50]).argmax(1)
print("top-1 agreement over 50 images:", float((wire == local).mean()))
