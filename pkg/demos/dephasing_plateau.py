"""Fidelity against pulse length, with and without drive-induced dephasing.

Each pulse length is calibrated on the noiseless model, then evaluated with
T1/T2 decoherence alone and with a drive-dependent dephasing term
``k * mean|Omega| * t_gate`` added. Since the product of amplitude and
duration is set by the rotation angle, that term costs the same fidelity at
every length, and long pulses settle onto a plateau.
"""
import argparse
import math

from leakopt.clifford import CostConfig
from leakopt.cost import ParameterSet, PulseContext, Stage
from leakopt.optimizer import StageSettings, calibrate
from leakopt.quantum import DeviceConfig, NoiseModel


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--k", type=float, default=0.0012)
    parser.add_argument("--samples", type=int, nargs="+", default=[10, 15, 20, 26])
    args = parser.parse_args()

    ssb = 2 * math.pi * 0.1
    print(" N   tau/ns   F (T1/T2)   F (T1/T2 + drive dephasing)")
    for n in args.samples:
        ideal = PulseContext(DeviceConfig(), NoiseModel.noiseless(), n, ssb)
        a0 = ideal.initial_amplitude()
        start = ParameterSet(Stage.DRAG, [a0, -1.0, ssb])
        res = calibrate(start, ideal, CostConfig(), StageSettings(max_iterations=40), reference_amplitude=a0, objective="fidelity")
        row = []
        for k in (0.0, args.k):
            ctx = PulseContext(DeviceConfig(), NoiseModel(t1=105e3, t2=39e3, dephasing_k=k), n, ssb)
            row.append(ctx.cliffords(res.params).average_fidelity())
        print(f"{n:>2}   {n / 2.4:6.2f}   {100 * row[0]:.3f} %    {100 * row[1]:.3f} %")


if __name__ == "__main__":
    main()
