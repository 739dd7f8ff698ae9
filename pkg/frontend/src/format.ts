import { ApiError } from "./api.js";

// Display-side currency exponents; the server does all real money math.
const MINOR_DIGITS: Record<string, number> = {
  USD: 2,
  EUR: 2,
  GBP: 2,
  CAD: 2,
  AUD: 2,
  MXN: 2,
  BRL: 2,
  INR: 2,
  JPY: 0,
  KRW: 0,
};

export function formatMinor(minor: number, currency: string): string {
  const digits = MINOR_DIGITS[currency] ?? 2;
  const sign = minor < 0 ? "-" : "";
  const abs = Math.abs(minor);
  if (digits === 0) return `${sign}${abs} ${currency}`;
  const unit = 10 ** digits;
  const whole = Math.floor(abs / unit);
  const frac = String(abs % unit).padStart(digits, "0");
  return `${sign}${whole}.${frac} ${currency}`;
}

export function titleCase(raw: string): string {
  return raw
    .toLowerCase()
    .split(/[_-]/)
    .filter((w) => w.length > 0)
    .map((w) => w[0]!.toUpperCase() + w.slice(1))
    .join(" ");
}

export function shortId(id: string | null): string {
  if (!id) return "";
  return id.length > 8 ? id.slice(0, 8) : id;
}

/**
 * Human line for an error banner. API failures keep the server's envelope
 * verbatim (code and message, details appended) so nothing gets paraphrased.
 */
export function errorText(err: unknown): string {
  if (err instanceof ApiError) {
    if (err.envelope) {
      const { code, message, details } = err.envelope.error;
      const base = `${code}: ${message}`;
      return details && Object.keys(details).length > 0
        ? `${base} ${JSON.stringify(details)}`
        : base;
    }
    return `HTTP ${err.status}`;
  }
  return err instanceof Error ? err.message : String(err);
}
