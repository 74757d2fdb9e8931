"""Score a batch of mock detections and show what the ranking surfaces.

Two detector views disagree most where the pseudo label is least reliable,
so the top of each ranking is where verification money goes first.
"""

from delr import (
    NoiseParams,
    generate_scenario,
    mock_detect,
    rank_descending,
    score_annotations,
)
from delr.scheduler import unflip_branch


def main() -> None:
    ds = generate_scenario(
        num_images=20,
        num_classes=5,
        objects_per_image_range=(1, 4),
        box_size_range=(24.0, 96.0),
        image_size=(640.0, 480.0),
        seed=11,
    )
    primary, flipped = mock_detect(ds, NoiseParams(), seed=3)
    scored = score_annotations(ds, primary, unflip_branch(flipped, ds))

    unpaired = [a for a in scored if not a.paired]
    paired = [a for a in scored if a.paired]
    print(f"{len(scored)} pseudo annotations over {len(ds.images)} images")
    print(f"{len(unpaired)} found by one view only: sentinel scores rank them first\n")

    print("highest box disagreement among paired detections (u_loc, pixels):")
    for ann in rank_descending(paired, "u_loc")[:5]:
        print(
            f"  {ann.id:16s} image {ann.image_id:8s} u_loc={ann.u_loc:7.2f} "
            f"conf={ann.confidence:.2f}"
        )

    print("\nhighest class disagreement among paired detections (u_cls, nats):")
    for ann in rank_descending(paired, "u_cls")[:5]:
        print(
            f"  {ann.id:16s} image {ann.image_id:8s} u_cls={ann.u_cls:7.4f} "
            f"conf={ann.confidence:.2f}"
        )


if __name__ == "__main__":
    main()
