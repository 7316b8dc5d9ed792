#!/usr/bin/env python3
"""Build and serialize a frequency trigger from an image file.

The output pair (<out>.json + <out>.bin) can be passed to
`freqpoison poison --trigger <out>.json`.
"""

import argparse

from freqpoison import trigger, wavelets
from freqpoison.data import read_image


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--image", required=True, help="PNG/PPM/BMP trigger image")
    ap.add_argument("--size", type=int, required=True, help="victim image side M")
    ap.add_argument("--level", type=int, default=2)
    ap.add_argument("--wavelet", default="db3")
    ap.add_argument("--pad", type=int, default=2)
    ap.add_argument("--per-channel", action="store_true")
    ap.add_argument("--out", required=True, help="output stem or .json path")
    args = ap.parse_args()

    ws = wavelets.wavelet_spec(args.wavelet, args.pad)
    trig = trigger.make_frequency_trigger(
        read_image(args.image), args.size, args.level, ws, per_channel=args.per_channel
    )
    path = trigger.save_frequency_trigger(trig, args.out)
    print(f"wrote {path} (sha256 {trigger.trigger_sha256(trig)[:16]}...)")


if __name__ == "__main__":
    main()
