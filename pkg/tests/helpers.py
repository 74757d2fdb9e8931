"""Small builders shared across test modules."""

from delr import (
    BoundingBox,
    Category,
    ClassDistribution,
    Dataset,
    Detection,
    GroundTruthObject,
    ImageRecord,
    PseudoAnnotation,
)


def box(x, y, w, h):
    return BoundingBox(float(x), float(y), float(w), float(h))


def dist(*probs):
    return ClassDistribution(tuple(float(p) for p in probs))


def gt(gid, b, class_id=0):
    return GroundTruthObject(id=gid, box=b, class_id=class_id)


def image(image_id="img0", width=640, height=480, objects=()):
    return ImageRecord(id=image_id, width=width, height=height, gt_objects=list(objects))


def dataset(images, num_classes=3):
    cats = [Category(id=k, name=f"class_{k:02d}") for k in range(num_classes)]
    ds = Dataset(images=list(images), categories=cats)
    ds.validate()
    return ds


def detection(det_id, image_id, b, probs):
    return Detection(id=det_id, image_id=image_id, box=b, class_dist=dist(*probs))


def annotation(ann_id, image_id, b, probs, u_loc=0.0, u_cls=0.0, paired=True):
    d = dist(*probs)
    return PseudoAnnotation(
        id=ann_id,
        image_id=image_id,
        box=b,
        class_dist=d,
        confidence=d.confidence,
        u_loc=u_loc,
        u_cls=u_cls,
        paired=paired,
    )
