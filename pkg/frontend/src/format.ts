// Display helpers. Data values are rendered verbatim (String of the JSON
// number) so what the user reads is exactly what the server sent; only
// layout quantities (bar widths) are derived.

export function raw(value: number): string {
  return String(value);
}

export function rawList(values: number[]): string {
  return values.map(raw).join(', ');
}

export function percentWidth(value: number, max: number): string {
  if (!isFinite(value) || !isFinite(max) || max <= 0) return '0%';
  const pct = Math.max(0, Math.min(100, (value / max) * 100));
  return `${pct}%`;
}

export function historyCsv(history: { design: { targets: number[]; values: number[] };
                                      rows: number[][] }[], d: number): string {
  const header = ['stage', 'target', 'clamp',
                  ...Array.from({ length: d }, (_, i) => `x${i}`)];
  const lines = [header.join(',')];
  history.forEach((step, stage) => {
    for (const row of step.rows) {
      lines.push([
        String(stage + 1),
        step.design.targets.map(raw).join(';'),
        step.design.values.map(raw).join(';'),
        ...row.map(raw),
      ].join(','));
    }
  });
  return lines.join('\n') + '\n';
}

export function parseCsvRows(text: string, d: number): number[][] {
  const rows: number[][] = [];
  for (const line of text.trim().split(/\r?\n/)) {
    if (!line.trim()) continue;
    const cells = line.split(/[,\s]+/).filter((c) => c.length > 0);
    if (cells.length !== d) {
      throw new Error(`each row needs ${d} values; got ${cells.length}`);
    }
    const parsed = cells.map((c) => {
      const v = Number(c);
      if (!isFinite(v)) throw new Error(`not a number: ${c}`);
      return v;
    });
    rows.push(parsed);
  }
  if (!rows.length) throw new Error('no outcome rows provided');
  return rows;
}
