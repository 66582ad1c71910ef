"""Template for wrapping a real forecasting model behind the wire protocol.

The serve loop in serve.py is model-agnostic: it parses requests, enforces
the protocol, and delegates every drawn trajectory to a model object. A
wrapper for a real model has to supply exactly three things:

1. load: build the model once at startup, before the first request. Heavy
   imports (torch, tensorflow, ...) and checkpoint loading belong here, not
   at module import time, so that --help stays fast.

2. predict_k: map one scene to k sampled future trajectories. The agent and
   neighbors arrive as plain lists of (x, y) tuples with t_past entries
   each; return a list of k lists, each holding t_future [x, y] pairs. All
   coordinates must be finite floats.

3. seed control: predict_k receives rng_factory; rng_factory(j) returns the
   random.Random stream for sample j of the current scene, already keyed by
   the request seed and the scene index. Route ALL stochasticity through
   these streams (e.g. torch.manual_seed(rng_factory(j).getrandbits(63)))
   so that identical seeded requests give identical replies, which the
   verifier's protocol checker enforces.

Run it with:  python -m trajadapter.template --checkpoint model.pt
"""

import sys

from .serve import AdapterConfig, build_parser, serve


class MyModel:
    """Replace this skeleton with your forecasting model."""

    def __init__(self, checkpoint, t_future):
        self.t_future = t_future
        # 1. load: read the checkpoint, move the network to its device,
        #    switch to eval mode, warm up whatever caches you need
        raise NotImplementedError("load your model here")

    def predict_k(self, agent, neighbors, k, rng_factory):
        # 2. predict_k: encode the scene, then draw k futures; sample j
        #    must consume randomness only from rng_factory(j)  (3.)
        #
        # trajectories = []
        # for j in range(k):
        #     rng = rng_factory(j)
        #     torch.manual_seed(rng.getrandbits(63))
        #     trajectories.append(self.decode(agent, neighbors))
        # return trajectories
        raise NotImplementedError("sample k futures here")


def main(argv=None):
    parser = build_parser()
    parser.add_argument("--checkpoint", required=True,
                        help="path to the trained model weights")
    args = parser.parse_args(argv)
    config = AdapterConfig(t_past=args.t_past, t_future=args.t_future,
                           noise_sigma=args.sigma, max_batch=args.max_batch,
                           name="my-model-adapter")
    model = MyModel(args.checkpoint, config.t_future)
    return serve(config, model=model)


if __name__ == "__main__":
    sys.exit(main())
