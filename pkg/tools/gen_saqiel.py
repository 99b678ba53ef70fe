"""Regenerate src/tendonkit/data/saqiel_ref.model.

Segment masses, joint spacing, ranges of motion and routing topology are
the known figures; inertias and anchor coordinates are approximations.
"""

import math
from pathlib import Path

from tendonkit.model import (Anchor, CircularWrap, EndEffector, JointSpec, LinearSpan, LinkSpec, MotorSpec,
                             RobotModel, WireRoute, dump_model, rod_inertia)

ROD_RADIUS = 0.03
SEG_MASS = 0.5
UPPER, FORE, HAND = 0.34, 0.24, 0.20
SHOULDER_ARM = 0.09
ELBOW_ARM = 0.05
WRIST_ARM = 0.02
WRAP_R_SHOULDER = 0.03
WRAP_R_WRIST = 0.015


def rod(name, length):
    return LinkSpec(name, SEG_MASS, (0.0, 0.0, -length / 2), rod_inertia(SEG_MASS, length, ROD_RADIUS))


def deg(v):
    return math.radians(v)


links = [
    LinkSpec("root"),
    LinkSpec("shoulder_roll_link"),
    LinkSpec("shoulder_link"),
    rod("upper_arm", UPPER),
    rod("forearm", FORE),
    LinkSpec("wrist_pitch_link"),
    LinkSpec("wrist_roll_link"),
    rod("hand", HAND),
]
X, Y, Z = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)
joints = [
    JointSpec("shoulder_roll", "root", "shoulder_roll_link", X, lower=deg(-55), upper=deg(55)),
    JointSpec("shoulder_pitch", "shoulder_roll_link", "shoulder_link", Y, lower=deg(-55), upper=deg(55)),
    JointSpec("shoulder_yaw", "shoulder_link", "upper_arm", Z, lower=deg(-90), upper=deg(90)),
    JointSpec("elbow", "upper_arm", "forearm", Y, (0.0, 0.0, -UPPER), lower=deg(-60), upper=deg(60)),
    JointSpec("wrist_pitch", "forearm", "wrist_pitch_link", Y, (0.0, 0.0, -FORE), lower=deg(-45), upper=deg(45)),
    JointSpec("wrist_roll", "wrist_pitch_link", "wrist_roll_link", X, lower=deg(-80), upper=deg(80)),
    JointSpec("wrist_yaw", "wrist_roll_link", "hand", Z, lower=deg(-150), upper=deg(150)),
]

routes = []
# shoulder wires 1, 5, 6, 10: root -> shoulder link aligner pair, then a wrap on shoulder yaw
for num, sx, sy, w in ((1, 1, 1, 1), (5, -1, -1, 1), (6, 1, -1, -1), (10, -1, 1, -1)):
    a = SHOULDER_ARM
    routes.append(WireRoute(f"w{num}", [
        LinearSpan(Anchor("root", (sx * a, sy * a, 0.06)), Anchor("shoulder_link", (sx * a, sy * a, -0.10))),
        CircularWrap("shoulder_yaw", WRAP_R_SHOULDER, w, 0.05),
    ]))
# elbow wires 2, 3, 4, 7, 8, 9: root -> forearm; 2, 4, 7, 9 continue to the hand
elbow = {2: (1, 1), 3: (1, 0), 4: (1, -1), 7: (-1, 1), 8: (-1, 0), 9: (-1, -1)}
wrist = {2: (1, 1), 9: (-1, 1), 4: (-1, -1), 7: (1, -1)}  # (roll sign, yaw sign)
for num in (2, 3, 4, 7, 8, 9):
    sx, sy = elbow[num]
    segs = [LinearSpan(Anchor("root", (sx * ELBOW_ARM, sy * 0.03, 0.06)),
                       Anchor("forearm", (sx * ELBOW_ARM, sy * 0.03, 0.0)))]
    if num in wrist:
        r_sign, y_sign = wrist[num]
        segs += [
            LinearSpan(Anchor("forearm", (sx * WRIST_ARM, sy * WRIST_ARM, -FORE + 0.06)),
                       Anchor("wrist_pitch_link", (sx * WRIST_ARM, sy * WRIST_ARM, 0.0))),
            CircularWrap("wrist_roll", WRAP_R_WRIST, r_sign, 0.03),
            CircularWrap("wrist_yaw", WRAP_R_WRIST, y_sign, 0.03),
        ]
    routes.append(WireRoute(f"w{num}", segs))
routes.sort(key=lambda r: int(r.name[1:]))

model = RobotModel("saqiel_ref", links, joints, routes, tension_ceiling=490.0, fully_actuated=True,
                   end_effector=EndEffector("hand", (0.0, 0.0, -HAND)))

if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "tendonkit" / "data" / "saqiel_ref.model"
    header = ("# SAQIEL-like 7-DoF coupled tendon-driven arm (reference approximation).\n"
              "# Segment masses 0.5 kg each as slender cylinders (r = 30 mm), COM at segment midpoints.\n"
              "# Generated by tools/gen_saqiel.py; edit that script, not this file.\n\n")
    out.write_text(header + dump_model(model))
    print(out)
