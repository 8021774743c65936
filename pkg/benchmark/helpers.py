from __future__ import annotations

import pandas as pd
from rich.console import Console
from rich.table import Table


def show_table(df: pd.DataFrame, title: str):
    table = Table(title=title)
    table.add_column("run", style="cyan")
    for column in df.columns:
        table.add_column(str(column), justify="right")
    for index, row in df.iterrows():
        cells = []
        for value in row:
            if isinstance(value, float):
                cells.append("{:.3e}".format(value))
            else:
                cells.append(str(value))
        table.add_row(str(index), *cells)
    Console().print(table)
