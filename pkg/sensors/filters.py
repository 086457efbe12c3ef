import numpy as np
from scipy.signal import savgol_filter

from .exceptions import BadWindow, SignalTooShort


def savitzky_golay(signal, window, order, axis=0):
    """
    Сглаживание Савицкого-Голея: центрированная локальная полиномиальная
    аппроксимация методом наименьших квадратов.

    На краях полином подгоняется по первому/последнему окну и вычисляется
    в крайних точках (mode="interp"), без зеркалирования сигнала.
    """
    signal = np.asarray(signal, dtype=float)
    if window < 1 or window % 2 == 0:
        raise BadWindow(f"Окно фильтра должно быть нечетным: {window}.")
    if order < 0 or order >= window:
        raise BadWindow(f"Порядок {order} должен быть меньше окна {window}.")
    if signal.shape[axis] < window:
        raise SignalTooShort(
            f"Длина сигнала {signal.shape[axis]} меньше окна фильтра {window}."
        )
    return savgol_filter(signal, window, order, axis=axis, mode="interp")
