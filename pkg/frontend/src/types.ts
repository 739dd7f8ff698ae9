// Wire shapes as the gateway serves them. These mirror the JSON the server
// already emits; the console adds nothing and persists nothing.

export type DeliveryStatus =
  | "CREATED"
  | "DISPATCHED"
  | "ACCEPTED"
  | "REJECTED"
  | "PICKED_UP"
  | "DELIVERED"
  | "CANCELED";

export type TripPhase =
  | "NONE"
  | "ARRIVED_AT_PICKUP"
  | "ON_THE_WAY"
  | "ARRIVED_AT_DROPOFF";

export type Availability = "ONLINE" | "OFFLINE" | "ON_BREAK";

export type Bucket = "new" | "in-progress" | "done";

export interface PlaceView {
  lon: number;
  lat: number;
  address: string;
}

export interface DeliveryView {
  deliveryId: string;
  instanceDomain: string;
  courierId: string | null;
  status: DeliveryStatus;
  tripPhase: TripPhase;
  pickupLocation: PlaceView;
  dropoffLocation: PlaceView;
  itemWeightLbs: number | null;
  merchantTags: string[];
  payoutMinor: number;
  currency: string;
  createdAt: string;
  updatedAt: string;
  issue: { code: string; note?: string } | null;
  history: Array<Record<string, unknown>>;
  distance: number | null;
  distanceUnit: string | null;
  threadId: string | null;
  chainId: string | null;
  attempt: number;
}

export interface CourierRecord {
  courierId: string;
  displayName: string;
  availability: Availability;
  enrolledAt: string;
  lon: number | null;
  lat: number | null;
  positionAt: string | null;
  activeDeliveryCount?: number;
}

export interface EnrolledCourier extends CourierRecord {
  token: string;
}

export interface PreferencesView {
  deliveryPolygon: Record<string, unknown>;
  vehicleType: string;
  preferredAreas: string[];
  shiftAvailability: Record<string, string[]>;
  deliveryPreferences: string[];
  foodPreferences: string[];
  earningGoals: Record<string, string>;
  deliverySpeed: string;
  restaurantTypes: string[];
  cuisineTypes: string[];
  dietaryRestrictions: string[];
  maxItemWeightLbs: number | null;
}

export interface LocationNote {
  locationNoteId: string;
  authorCourierId: string;
  position: { lon: number; lat: number };
  text: string;
  createdAt: string;
  updatedAt: string;
  reactions: Record<string, string[]>;
  deleted: boolean;
}

export type RoundKind = "OFFER" | "COUNTER" | "ACCEPT" | "REJECT";
export type ThreadState = "OPEN" | "ACCEPTED" | "REJECTED" | "EXPIRED" | "FINALIZED";

export interface RoundView {
  by: string;
  kind: RoundKind;
  message: string;
  amount: string | null;
  at: string;
}

export interface QuoteView {
  quoteId: string;
  quote: string;
  quoteRangeFrom: string;
  quoteRangeTo: string;
  currency: string;
  feePercentage: string;
  duration: number;
  distance: number;
  distanceUnit: string;
  pickupName: string;
  dropoffName: string;
  expiresAt: string;
  pickupLocation: PlaceView;
  dropoffLocation: PlaceView;
  [extra: string]: unknown;
}

export interface ThreadView {
  threadId: string;
  state: ThreadState;
  requesterId: string;
  instanceDomain: string;
  broadcastGroupId: string | null;
  quote: QuoteView;
  rounds: RoundView[];
  agreedAmount: string | null;
  deliveryId: string | null;
}

export type PolicyKind = "NEAREST" | "MOST_SENIOR" | "SPECIFIED";

export interface PolicyView {
  policy: PolicyKind;
  courierId: string | null;
  respectPreferences: boolean;
}

export interface MetricsView {
  deliveriesCompleted: number;
  avgHourlyEarnings: string | null;
  avgPayoutPerDelivery: string | null;
  avgDurationMinutes: number | null;
  rejectionRate: number | null;
  [extra: string]: unknown;
}

export interface InstanceRecordView {
  domainName: string;
  [extra: string]: unknown;
}

export interface ErrorEnvelope {
  error: {
    code: string;
    message: string;
    details?: Record<string, unknown>;
  };
}

export interface ConsoleConfig {
  gatewayBaseUrl: string;
  registryUrl: string;
  pollIntervalMs: number;
}

export const DEFAULT_CONFIG: ConsoleConfig = {
  gatewayBaseUrl: "http://127.0.0.1:8700",
  registryUrl: "http://127.0.0.1:8701",
  pollIntervalMs: 3000,
};
