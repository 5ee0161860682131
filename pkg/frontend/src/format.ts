// Display formatting only; every number shown originates from the server.

const EM_DASH = "—";

export function fmt(value: number | null | undefined, digits = 2): string {
    if (value === null || value === undefined || Number.isNaN(value)) return EM_DASH;
    return value.toFixed(digits);
}

export function pct(value: number | null | undefined): string {
    if (value === null || value === undefined || Number.isNaN(value)) return EM_DASH;
    return `${Math.round(value * 100)}%`;
}

export function signed(value: number | null | undefined, digits = 2): string {
    if (value === null || value === undefined || Number.isNaN(value)) return EM_DASH;
    const text = value.toFixed(digits);
    return value > 0 ? `+${text}` : text;
}
